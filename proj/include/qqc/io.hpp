#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "../../vendor/json.hpp"
#include "qqc/dynamics.hpp"
#include "qqc/errors.hpp"

namespace qqc {

using json = nlohmann::json;

namespace detail {
inline void write_exact(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw ConfigError("checkpoint: short write");
}
inline void read_exact(std::ifstream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
        throw ConfigError("checkpoint: truncated file");
}
}  // namespace detail

// Checkpoint layout: one JSON header line, '\n', then the raw complex field
// as little-endian doubles (re, im per cell). Doubles in the header are
// serialized round-trip exactly, so a resumed run continues bit-identically.
struct SimCheckpoint {
    static constexpr const char* kMagic = "qqc-checkpoint-1";

    static void save(const CoupledSim& sim, const std::string& path, std::uint64_t seed,
                     const json& extra = json::object()) {
        const Grid& g = *sim.field().grid;
        json h;
        h["magic"] = kMagic;
        h["mode"] = to_string(g.mode);
        h["nz"] = g.nz;
        h["rows"] = g.rows;
        h["time"] = sim.field().time;
        h["absorbed"] = sim.field().absorbed;
        h["absorbedLeft"] = sim.field().absorbedLeft;
        h["absorbedRight"] = sim.field().absorbedRight;
        h["ion"] = {{"r", sim.ion().r}, {"v", sim.ion().v}};
        h["impulse"] = sim.accumulatedImpulse();
        h["steps"] = sim.stepsTaken();
        h["dt"] = sim.stepper().dt;
        h["seed"] = seed;
        h["extra"] = extra;
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("checkpoint: cannot open " + path + " for writing");
        const std::string header = h.dump();
        detail::write_exact(os, header.data(), header.size());
        detail::write_exact(os, "\n", 1);
        detail::write_exact(os, sim.field().psi.data(),
                            sim.field().psi.size() * sizeof(std::complex<double>));
    }

    // returns the stored seed; throws on any mismatch with the current setup
    static std::uint64_t load(CoupledSim& sim, const std::string& path, json* extraOut = nullptr) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw ConfigError("checkpoint: cannot open " + path);
        std::string header;
        std::getline(is, header);
        json h;
        try {
            h = json::parse(header);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("checkpoint: bad header: ") + e.what());
        }
        if (h.value("magic", "") != kMagic) throw ConfigError("checkpoint: wrong file type");
        const Grid& g = *sim.field().grid;
        if (h.at("mode").get<std::string>() != to_string(g.mode) ||
            h.at("nz").get<int>() != g.nz || h.at("rows").get<int>() != g.rows)
            throw ConfigError("checkpoint: grid does not match the current setup");
        sim.field().time = h.at("time").get<double>();
        sim.field().absorbed = h.at("absorbed").get<double>();
        sim.field().absorbedLeft = h.at("absorbedLeft").get<double>();
        sim.field().absorbedRight = h.at("absorbedRight").get<double>();
        sim.ion().r = h.at("ion").at("r").get<std::array<double, 3>>();
        sim.ion().v = h.at("ion").at("v").get<std::array<double, 3>>();
        sim.impulse_ = h.at("impulse").get<std::array<double, 3>>();
        sim.stepsTaken_ = h.at("steps").get<long>();
        if (std::abs(h.at("dt").get<double>() - sim.stepper().dt) > 0.0)
            throw ConfigError("checkpoint: dt does not match the current setup");
        detail::read_exact(is, sim.field().psi.data(),
                           sim.field().psi.size() * sizeof(std::complex<double>));
        sim.lastNorm_ = -1.0;
        sim.backActionFresh_ = false;
        if (extraOut) *extraOut = h.value("extra", json::object());
        return h.at("seed").get<std::uint64_t>();
    }
};

// %.17g keeps every double round-trip exact in text output
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : os_(path, std::ios::trunc), ncol_(columns.size()) {
        if (!os_) throw ConfigError("csv: cannot open " + path + " for writing");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) os_ << ',';
            os_ << columns[i];
        }
        os_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != ncol_) throw ConfigError("csv: wrong number of cells in row");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }

    void close() { os_.close(); }

  private:
    std::ofstream os_;
    std::size_t ncol_;
};

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

}  // namespace qqc
