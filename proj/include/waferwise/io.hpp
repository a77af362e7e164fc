#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace waferwise::io {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
/// Throws Error("parse") with the offending text.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws Error("schema_mismatch") when absent.
    std::size_t column(std::string_view name) const;
};

/// Plain comma-separated text, no quoting. Blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, std::string_view source = "<memory>");

/// Requires the header to equal `expected` exactly; names the first difference otherwise.
void require_header(const CsvTable& table, std::span<const std::string_view> expected,
                    std::string_view source);

/// Builds CSV text row by row.
class CsvWriter {
public:
    explicit CsvWriter(std::span<const std::string_view> header);
    explicit CsvWriter(const std::vector<std::string>& header);

    CsvWriter& cell(std::string_view text);
    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
    void end_row();

    const std::string& text() const { return text_; }

private:
    void separator();

    std::string text_;
    bool row_open_ = false;
};

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace waferwise::io
