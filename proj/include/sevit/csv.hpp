#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sevit::csv {

/// Splits one comma-separated record. Fields may be double-quoted, with ""
/// as an escaped quote. Quoted fields may not span lines. A trailing CR is
/// ignored.
std::vector<std::string> split_record(std::string_view line);

/// Quotes a field if it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

std::string join_record(const std::vector<std::string>& fields);

}  // namespace sevit::csv
