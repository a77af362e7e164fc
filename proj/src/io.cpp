#include "waferwise/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "waferwise/error.hpp"

namespace waferwise::io {

namespace fs = std::filesystem;

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw Error("format", "cannot format double");
    return {buf, ptr};
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw Error("parse", "not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error("parse", "not an integer: '" + std::string(text) + "'");
    }
    return value;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw Error("schema_mismatch", "missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text, std::string_view source) {
    CsvTable table;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size()) {
                throw Error("schema_mismatch", std::string(source) + ":" + std::to_string(line_no) +
                                                   ": expected " + std::to_string(table.header.size()) +
                                                   " fields, got " + std::to_string(fields.size()));
            }
            table.rows.push_back(std::move(fields));
        }
        if (end == text.size()) break;
    }
    if (table.header.empty()) throw Error("schema_mismatch", std::string(source) + ": empty CSV");
    return table;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

void require_header(const CsvTable& table, std::span<const std::string_view> expected,
                    std::string_view source) {
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i >= table.header.size() || table.header[i] != expected[i]) {
            throw Error("schema_mismatch",
                        std::string(source) + ": header column " + std::to_string(i) + " expected '" +
                            std::string(expected[i]) + "', got '" +
                            (i < table.header.size() ? table.header[i] : std::string("<none>")) + "'");
        }
    }
    if (table.header.size() != expected.size()) {
        throw Error("schema_mismatch", std::string(source) + ": expected " + std::to_string(expected.size()) +
                                           " columns, got " + std::to_string(table.header.size()));
    }
}

CsvWriter::CsvWriter(std::span<const std::string_view> header) {
    for (auto h : header) cell(h);
    end_row();
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) {
    for (const auto& h : header) cell(std::string_view(h));
    end_row();
}

void CsvWriter::separator() {
    if (row_open_) text_ += ',';
    row_open_ = true;
}

CsvWriter& CsvWriter::cell(std::string_view value) {
    separator();
    text_ += value;
    return *this;
}

CsvWriter& CsvWriter::cell(double value) {
    separator();
    text_ += format_double(value);
    return *this;
}

CsvWriter& CsvWriter::cell(long long value) {
    separator();
    text_ += std::to_string(value);
    return *this;
}

void CsvWriter::end_row() {
    text_ += '\n';
    row_open_ = false;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw Error("io", "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io", "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("io", "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error("io", "cannot rename into " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace waferwise::io
