#include "mimo/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "mimo/common.hpp"

namespace mimo::io {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw IoError(context + ": cannot parse '" + text + "' as a number");
    }
    return v;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path.string());
    return std::move(buf).str();
}

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    return std::vector<std::uint8_t>(text.begin(), text.end());
}

namespace {

void write_atomic_impl(const std::filesystem::path& path, const char* data,
                       std::size_t size) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() +
                          ": " + ec.message());
        }
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(data, static_cast<std::streamsize>(size));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

} // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    write_atomic_impl(path, contents.data(), contents.size());
}

void write_binary_atomic(const std::filesystem::path& path,
                         const std::vector<std::uint8_t>& contents) {
    write_atomic_impl(path, reinterpret_cast<const char*>(contents.data()),
                      contents.size());
}

namespace {

void check_cell(const std::string& cell) {
    for (char c : cell) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            throw IoError("csv cell '" + cell + "' needs quoting, which this writer "
                          "does not support");
        }
    }
}

void append_row(std::string& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        check_cell(row[i]);
        if (i) out += ',';
        out += row[i];
    }
    out += '\n';
}

} // namespace

std::string to_csv(const Csv& table) {
    std::string out;
    append_row(out, table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw IoError("csv row has " + std::to_string(row.size()) +
                          " cells, header has " + std::to_string(table.header.size()));
        }
        append_row(out, row);
    }
    return out;
}

Csv parse_csv(const std::string& text, const std::string& context) {
    Csv table;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::size_t len = eol - pos;
        if (len > 0 && text[pos + len - 1] == '\r') --len;
        std::string line = text.substr(pos, len);
        pos = eol + 1;
        if (line.empty() && pos >= text.size()) break;

        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != table.header.size()) {
                throw IoError(context + ": csv row with " + std::to_string(cells.size()) +
                              " cells under a header of " +
                              std::to_string(table.header.size()));
            }
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw IoError(context + ": empty csv");
    return table;
}

void write_csv_atomic(const std::filesystem::path& path, const Csv& table) {
    write_file_atomic(path, to_csv(table));
}

Csv read_csv(const std::filesystem::path& path) {
    return parse_csv(read_file(path), path.string());
}

} // namespace mimo::io
