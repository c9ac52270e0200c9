#include "veil/seeding.h"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

namespace veil {

uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t base, uint64_t step, Stream stream) {
  return mix_seed(mix_seed(mix_seed(base) ^ step) ^ static_cast<uint64_t>(stream));
}

torch::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

void seeded_init(torch::nn::Module& module, uint64_t seed, double gain) {
  torch::NoGradGuard no_grad;
  auto gen = make_generator(seed);
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    const auto& name = item.key();
    auto& p = item.value();
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("bias")) {
      p.zero_();
    } else if (ends_with("gain")) {
      p.fill_(1.0);
    } else if (p.dim() >= 2) {
      const int64_t fan_in = p.numel() / p.size(0);
      const double bound = gain / std::sqrt(static_cast<double>(fan_in));
      p.copy_(at::rand(p.sizes(), gen, p.options()) * (2.0 * bound) - bound);
    } else {
      p.fill_(1.0);
    }
  }
}

}  // namespace veil
