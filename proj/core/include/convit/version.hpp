#pragma once

namespace convit {

// Library version as "major.minor.patch".
const char* version();

}  // namespace convit
