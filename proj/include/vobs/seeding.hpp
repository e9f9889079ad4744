#pragma once

#include <cstdint>
#include <string_view>

namespace vobs {

// Child seeds are derived from the master seed by hashing (master, name, index);
// no component owns global RNG state.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

}  // namespace vobs
