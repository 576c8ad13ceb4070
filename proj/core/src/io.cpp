#include "dynlab/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dynlab/errors.hpp"

namespace dynlab {

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::string out;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    CsvTable table;
    std::istringstream stream(text);
    std::string line;
    if (!std::getline(stream, line)) {
        throw ConfigError("csv: empty file " + path.string());
    }
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    while (std::getline(stream, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(table.header.size());
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v = 0.0;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) {
                throw ConfigError("csv: bad numeric cell in " + path.string());
            }
            row.push_back(v);
            p = res.ptr;
            if (p < end && *p == ',') ++p;
        }
        if (row.size() != table.header.size()) {
            throw ConfigError("csv: ragged row in " + path.string());
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    return fnv1a64(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ConfigError("write failed for " + path.string());
}

}  // namespace dynlab
