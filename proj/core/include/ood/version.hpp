#pragma once

#include <string_view>

namespace ood {

/// Library version, e.g. "0.1.0".
std::string_view library_version() noexcept;

}  // namespace ood
