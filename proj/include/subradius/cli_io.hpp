#pragma once

#include "subradius/matrix_set.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace subradius {

/// Matrix-set files are JSON objects
///   {"dim": d, "matrices": [{"label": "...", "rows": [[...], ...]}, ...]}
/// with row-major entries as decimal doubles. Parsing validates the schema
/// first (violations name the offending matrices[] index plus row and column)
/// and the set second (a singular matrix is reported by its label). Saving
/// emits a canonical layout with numbers at 17 significant digits, which
/// round-trip doubles exactly: load followed by save is the identity on
/// files that save produced.
MatrixSet load_matrix_set(const std::string& path);
MatrixSet parse_matrix_set(const std::string& text, const std::string& origin = "<string>");
std::string format_matrix_set(const MatrixSet& set);
void save_matrix_set(const MatrixSet& set, const std::string& path);

/// 64-bit FNV-1a over the raw bytes, rendered "fnv1a:" + 16 lowercase hex
/// digits. Recorded in every run report as the input digest.
std::string fnv1a_digest(const std::string& bytes);

/// The entry point behind the command-line binary, callable in-process by
/// tests. `args` holds the arguments after the program name. The JSON run
/// report goes to --out when given, otherwise to `out`; diagnostics go to
/// `err`. Returns 0 on success, 2 when the verdict is undetermined and
/// --strict was given, and 1 on any error (bad flags, unreadable files,
/// schema violations, failed certificate verification).
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace subradius
