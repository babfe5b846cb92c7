#include "manifest.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace xvd::cli {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

nlohmann::json RunManifest::to_json() const {
  auto files = [](const auto& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [path, digest] : list) arr.push_back({{"path", path}, {"sha256", digest}});
    return arr;
  };
  return {{"command", command},
          {"config", config},
          {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
          {"inputs", files(inputs)},
          {"outputs", files(outputs)},
          {"version", version}};
}

}  // namespace xvd::cli
