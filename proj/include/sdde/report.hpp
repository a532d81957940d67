#pragma once

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "sdde/averaging.hpp"
#include "sdde/reduced.hpp"
#include "sdde/spectrum.hpp"
#include "sdde/stats.hpp"

namespace sdde {

// Shortest round-trip decimal; "inf", "-inf", "nan" for non-finite values.
std::string format_double(double v);

nlohmann::json to_json(const CensusReport& c);
nlohmann::json to_json(const SpectralData& s);
nlohmann::json to_json(const Polynomial& p);
nlohmann::json to_json(const ReducedCoefficients& rc);
nlohmann::json to_json(const LinearConstants& lc);
nlohmann::json to_json(const ThresholdReport& t);

struct ArtifactMeta {
    std::string command;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string header_line() const;  // "# sdde <command> config_hash=... seed=..."
};

// CSV file whose first line is the meta header comment followed by the column header.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const ArtifactMeta& meta, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);

private:
    std::ofstream out_;
    std::size_t width_;
};

// Writes the document with a "meta" member {command, config_hash, seed}.
void write_json(const std::string& path, nlohmann::json doc, const ArtifactMeta& meta);

// Writes sorted samples and their empirical CDF values as x,cdf rows.
void write_cdf_csv(const std::string& path, const ArtifactMeta& meta, const EmpiricalCDF& cdf);

}  // namespace sdde
