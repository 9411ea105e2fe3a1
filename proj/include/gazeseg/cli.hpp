#pragma once

#include <iosfwd>

namespace gazeseg {

// Exit codes: 0 success, 1 domain error (one JSON line on `err`), 2 usage.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gazeseg
