#ifndef CSD_CLI_HPP
#define CSD_CLI_HPP

#include <iosfwd>

namespace csd {

/// Entry point of the `csd` tool. Returns 0 on success, 2 on a usage error
/// and 1 on a runtime error. Output goes to `out`, diagnostics to `err`.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace csd

#endif  // CSD_CLI_HPP
