#pragma once

#include "io.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semiefgm::harness {

enum class WindowMode { returns, prices };

inline WindowMode window_mode_from_string(const std::string& name)
{
    if (name == "returns") return WindowMode::returns;
    if (name == "prices") return WindowMode::prices;
    throw InvalidInput("window mode must be returns or prices (got '" + name + "')");
}

struct PriceIngestSpec {
    std::filesystem::path path;
    int window = 5;
    WindowMode mode = WindowMode::returns;
};

struct DroppedTicker {
    std::string ticker;
    std::string reason;
};

struct IngestResult {
    /// n = floor((T - 1) / window) samples, one unit-norm window vector per ticker.
    Dataset data;
    std::vector<std::string> tickers;
    std::vector<DroppedTicker> dropped_tickers;
    /// Data-row indices (0-based, header excluded) removed for missing values.
    std::vector<std::size_t> dropped_rows;
    std::vector<std::string> warnings;
    /// Rows left after cleaning.
    std::size_t rows_used = 0;
};

namespace detail {

/// Empty, non-numeric and nonpositive cells are missing.
inline std::optional<double> price_cell(const std::string& text)
{
    if (text.empty() || text == "NA" || text == "NaN" || text == "nan") return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v) || v <= 0.0) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Reads a dates x tickers CSV (first column is the date label) of adjusted
/// closes. A ticker is kept only when it is quoted on the first and last row
/// and has at least window + 1 quotes; remaining rows with a missing quote are
/// dropped with a warning. Each sample is a non-overlapping block of window
/// consecutive log returns (or the matching closes in prices mode), scaled
/// to unit Euclidean norm. A ticker with a zero block is dropped.
inline IngestResult ingest_prices(const PriceIngestSpec& spec)
{
    semiefgm::detail::require(spec.window >= 1, "ingest_prices: window must be at least 1");
    const auto rows = read_csv(spec.path);
    if (rows.size() < 2) throw InvalidInput(spec.path.string() + ": price CSV needs a header and rows");
    const auto& header = rows.front();
    if (header.size() < 2) throw InvalidInput(spec.path.string() + ": no ticker columns");
    const std::size_t w = static_cast<std::size_t>(spec.window);
    const std::size_t total_rows = rows.size() - 1;
    const std::size_t tickers = header.size() - 1;

    std::vector<std::vector<std::optional<double>>> cells(tickers, std::vector<std::optional<double>>(total_rows));
    for (std::size_t r = 0; r < total_rows; ++r) {
        const auto& row = rows[r + 1];
        if (row.size() > header.size())
            throw InvalidInput(spec.path.string() + ": row " + std::to_string(r + 1) + " has too many fields");
        for (std::size_t c = 0; c < tickers; ++c)
            if (c + 1 < row.size()) cells[c][r] = detail::price_cell(row[c + 1]);
    }

    IngestResult out;
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < tickers; ++c) {
        std::size_t valid = 0;
        for (const auto& v : cells[c]) valid += v.has_value();
        if (valid < w + 1)
            out.dropped_tickers.push_back({header[c + 1], "fewer than window + 1 quotes"});
        else if (!cells[c].front() || !cells[c].back())
            out.dropped_tickers.push_back({header[c + 1], "history does not span the full date range"});
        else
            kept.push_back(c);
    }

    std::vector<std::size_t> good_rows;
    for (std::size_t r = 0; r < total_rows; ++r) {
        bool complete = true;
        for (std::size_t c : kept) complete = complete && cells[c][r].has_value();
        if (complete) {
            good_rows.push_back(r);
        } else {
            out.dropped_rows.push_back(r);
            out.warnings.push_back("dropped row " + std::to_string(r + 1) + " (" + rows[r + 1].front() +
                                   "): missing quote");
        }
    }
    out.rows_used = good_rows.size();
    if (good_rows.size() < w + 1) throw InvalidInput(spec.path.string() + ": fewer than window + 1 complete rows");
    const std::size_t samples = (good_rows.size() - 1) / w;

    std::vector<std::size_t> final_cols;
    std::vector<std::vector<double>> blocks;  // per kept ticker: samples * w values
    for (std::size_t c : kept) {
        std::vector<double> values(samples * w);
        bool zero_block = false;
        for (std::size_t i = 0; i < samples && !zero_block; ++i) {
            double norm2 = 0.0;
            for (std::size_t k = 0; k < w; ++k) {
                const std::size_t t = 1 + i * w + k;
                const double now = *cells[c][good_rows[t]];
                const double v = spec.mode == WindowMode::returns ? std::log(now / *cells[c][good_rows[t - 1]]) : now;
                values[i * w + k] = v;
                norm2 += v * v;
            }
            if (norm2 == 0.0) {
                zero_block = true;
                break;
            }
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t k = 0; k < w; ++k) values[i * w + k] *= inv;
        }
        if (zero_block) {
            out.dropped_tickers.push_back({header[c + 1], "zero window cannot be normalized"});
            continue;
        }
        final_cols.push_back(c);
        blocks.push_back(std::move(values));
    }
    if (final_cols.size() < 2) throw InvalidInput(spec.path.string() + ": fewer than two usable tickers");
    if (samples < 1) throw InvalidInput(spec.path.string() + ": no complete window");

    const Index p = static_cast<Index>(final_cols.size());
    Matrix values(static_cast<Index>(samples), p * spec.window);
    for (Index s = 0; s < p; ++s)
        for (std::size_t i = 0; i < samples; ++i)
            for (std::size_t k = 0; k < w; ++k)
                values(static_cast<Index>(i), s * spec.window + static_cast<Index>(k)) =
                    blocks[static_cast<std::size_t>(s)][i * w + k];
    out.data = Dataset::from_values(values, spec.window);
    for (std::size_t c : final_cols) out.tickers.push_back(header[c + 1]);
    return out;
}

} // namespace semiefgm::harness
