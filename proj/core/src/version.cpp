#include "ood/version.hpp"

namespace ood {

std::string_view library_version() noexcept { return OODDIAG_VERSION_STRING; }

}  // namespace ood
