#include "veil/manifest.h"

#include <openssl/evp.h>

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "veil/csv_io.h"
#include "veil/version.h"

namespace veil {

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

nlohmann::json RunManifest::to_json() const {
  const auto config_text = config.dump();
  return {{"manifest_version", 1},
          {"command", command},
          {"argv", argv},
          {"version", kVersionString},
          {"seed", seed},
          {"config", config},
          {"config_sha1", sha1_hex(config_text)},
          {"outputs", outputs},
          {"summary", summary}};
}

void RunManifest::write(const std::filesystem::path& path) const { write_text_atomic(path, to_json().dump(2) + "\n"); }

bool is_manifest(const nlohmann::json& j) {
  return j.is_object() && j.contains("manifest_version") && j.contains("config") && j.at("config").is_object();
}

}  // namespace veil
