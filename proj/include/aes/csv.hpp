#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace aes::csv {

// Splits one comma-separated line. Double-quoted fields may contain commas
// and doubled quotes; embedded newlines are not supported here (see
// read_records).
std::vector<std::string> split_line(std::string_view line);

// Reads a whole comma-separated file into records. Quoted fields may span
// lines. Trailing '\r' is dropped.
std::vector<std::vector<std::string>> read_records(const std::filesystem::path& path);

// Quotes a field when it contains a comma, quote, or line break.
std::string quote(std::string_view field);

// Always quotes.
std::string quote_always(std::string_view field);

// Fixed-point formatting with a locale-independent representation.
// Negative zero is printed as zero.
std::string fixed(double value, int decimals);

// Shortest decimal form that parses back to the identical double.
std::string exact(double value);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

// Writes atomically: contents go to a sibling temp file that is renamed over
// the destination.
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace aes::csv
