#pragma once

#include <string>
#include <string_view>

namespace dlava {

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace dlava
