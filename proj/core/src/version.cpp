#include "convit/version.hpp"

namespace convit {

const char* version() { return "0.1.0"; }

}  // namespace convit
