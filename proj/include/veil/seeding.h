#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace veil {

// Named random streams. Every stochastic quantity in a run is drawn from a
// generator keyed by (base seed, step, stream), so a run can be resumed from
// its step counter alone.
enum class Stream : uint64_t {
  kData = 1,
  kSchedule = 2,
  kSnr = 3,
  kReparam = 4,
  kChannel = 5,
  kNullChunks = 6,
  kInit = 7,
  kDetector = 8,
  kEval = 9,
};

/// splitmix64 finalizer; used to decorrelate derived seeds.
uint64_t mix_seed(uint64_t x);

uint64_t derive_seed(uint64_t base, uint64_t step, Stream stream);

/// CPU generator seeded deterministically.
torch::Generator make_generator(uint64_t seed);

/// Bound multiplier giving He-uniform weights, for ReLU/SiLU stacks.
inline constexpr double kHeGain = 2.449489742783178;  // sqrt(6)

/// Re-initializes every parameter of `module` from a generator seeded with
/// `seed`. Weights use uniform(-g/sqrt(fan_in), g/sqrt(fan_in)); biases start
/// at zero and norm gains at one.
void seeded_init(torch::nn::Module& module, uint64_t seed, double gain = 1.0);

}  // namespace veil
