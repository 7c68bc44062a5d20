#include "dlava/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "dlava/error.hpp"

namespace dlava {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::kValidation, "SHA-256 digest failed");
  }
  std::string out;
  out.reserve(length * 2);
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    out += buf;
  }
  return out;
}

}  // namespace dlava
