#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace milfd::cli {

// Runs one command line (args excludes the program name). Normal output
// goes to out; failures print "error: <category>: <message>" to err.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace milfd::cli
