#pragma once

#include <cstdint>
#include <string_view>

namespace mmcast {

/// Independent sub-seed for a named stream, e.g. derive_seed(seed, "data").
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace mmcast
