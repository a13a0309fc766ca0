// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "paretogen/diffcore/param_store.hpp"

namespace paretogen::diffcore {

// Text format, one tensor per block:
//   paretogen-params 1
//   tensor <name> <rows> <cols>
//   <row-major values as C99 hex floats, one row per line>
// Hex floats make the round trip bit-exact.

inline constexpr const char* kCheckpointMagic = "paretogen-params";
inline constexpr int kCheckpointVersion = 1;

inline void write_params(std::ostream& out, const ParamStore& store) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    char buf[64];
    for (const auto& [name, p] : store) {
        out << "tensor " << name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                std::snprintf(buf, sizeof buf, "%a", p.value(r, c));
                if (c) out << ' ';
                out << buf;
            }
            out << '\n';
        }
    }
}

inline ParamStore read_params(std::istream& in, const std::string& source = "<stream>") {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic)
        throw DataError(source + ": not a parameter checkpoint");
    if (version != kCheckpointVersion)
        throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
    ParamStore store;
    std::string tag, name;
    while (in >> tag) {
        Eigen::Index rows = 0, cols = 0;
        if (tag != "tensor" || !(in >> name >> rows >> cols) || rows < 0 || cols < 0)
            throw DataError(source + ": malformed tensor header");
        auto& p = store.add(name, rows, cols);
        std::string tok;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (!(in >> tok)) throw DataError(source + ": truncated tensor '" + name + "'");
                char* end = nullptr;
                p.value(r, c) = std::strtod(tok.c_str(), &end);
                if (end != tok.c_str() + tok.size()) throw DataError(source + ": bad value '" + tok + "' in '" + name + "'");
            }
    }
    return store;
}

inline void save_params(const std::string& path, const ParamStore& store) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    write_params(out, store);
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline ParamStore load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing checkpoint '" + path + "'");
    return read_params(in, path);
}

}  // namespace paretogen::diffcore
