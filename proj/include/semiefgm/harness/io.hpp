#pragma once

#include "../dataset.hpp"
#include "../errors.hpp"
#include "../linalg.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace semiefgm::harness {

using nlohmann::json;

/// Shortest text that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

inline double parse_double(const std::string& text, const std::string& where)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw InvalidInput("not a number at " + where + ": '" + text + "'");
    }
}

inline std::ofstream open_output(const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    return out;
}

/// Square matrix CSV: header "node,0,1,...", one row per node.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m)
{
    auto out = open_output(path);
    out << "node";
    for (Index c = 0; c < m.cols(); ++c) out << ',' << c;
    out << '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        out << r;
        for (Index c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
        out << '\n';
    }
}

inline Matrix read_matrix_csv(const std::filesystem::path& path)
{
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw InvalidInput(path.string() + ": matrix CSV needs a header and rows");
    const Index cols = static_cast<Index>(rows.front().size()) - 1;
    Matrix m(static_cast<Index>(rows.size()) - 1, cols);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != cols + 1)
            throw InvalidInput(path.string() + ": ragged row " + std::to_string(r));
        for (Index c = 0; c < cols; ++c)
            m(static_cast<Index>(r) - 1, c) =
                parse_double(rows[r][static_cast<std::size_t>(c) + 1], path.string() + ":" + std::to_string(r));
    }
    return m;
}

/// Dataset CSV: header "v{s}_{k}" for node s, feature k; one sample per row.
inline void write_dataset_csv(const std::filesystem::path& path, const Dataset& data)
{
    auto out = open_output(path);
    const Index d = data.feature_dim();
    for (Index s = 0; s < data.p(); ++s)
        for (Index k = 0; k < d; ++k) out << (s || k ? "," : "") << 'v' << s << '_' << k;
    out << '\n';
    for (Index i = 0; i < data.n(); ++i) {
        const auto row = data.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
        out << '\n';
    }
}

inline Dataset read_dataset_csv(const std::filesystem::path& path)
{
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw InvalidInput(path.string() + ": dataset CSV needs a header and samples");
    const auto& header = rows.front();
    Index p = 0, d = 0;
    for (const auto& name : header) {
        const auto sep = name.find('_');
        if (name.size() < 4 || name[0] != 'v' || sep == std::string::npos)
            throw InvalidInput(path.string() + ": bad column name '" + name + "'");
        p = std::max<Index>(p, std::stol(name.substr(1, sep - 1)) + 1);
        d = std::max<Index>(d, std::stol(name.substr(sep + 1)) + 1);
    }
    if (static_cast<Index>(header.size()) != p * d)
        throw InvalidInput(path.string() + ": header does not cover p x d columns");
    Matrix values(static_cast<Index>(rows.size()) - 1, p * d);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) throw InvalidInput(path.string() + ": ragged row " + std::to_string(r));
        for (std::size_t c = 0; c < header.size(); ++c)
            values(static_cast<Index>(r) - 1, static_cast<Index>(c)) =
                parse_double(rows[r][c], path.string() + ":" + std::to_string(r));
    }
    return Dataset::from_values(values, d);
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace semiefgm::harness
