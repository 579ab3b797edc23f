#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "chronode/tensor.hpp"

namespace chronode {

inline constexpr const char* kCheckpointMagic = "CHRONODE-CKPT-1";

// Text format: magic header, then one record per parameter:
//   <name> <rows> <cols> <row-major values...>
inline void save_checkpoint(const std::vector<std::pair<std::string, Tensor*>>& params,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot write " + path);
    out << kCheckpointMagic << "\n";
    out.precision(17);
    for (const auto& [name, t] : params) {
        out << name << " " << t->rows() << " " << t->cols();
        for (int i = 0; i < t->size(); ++i) out << " " << (*t)[i];
        out << "\n";
    }
}

// Loads into an already-built model; every parameter must be present with
// matching shape.
inline void load_checkpoint(const std::vector<std::pair<std::string, Tensor*>>& params,
                            const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    std::string magic;
    std::getline(in, magic);
    if (!magic.empty() && magic.back() == '\r') magic.pop_back();
    if (magic != kCheckpointMagic)
        throw DataError("load_checkpoint: bad magic '" + magic + "' in " + path);

    std::vector<bool> seen(params.size(), false);
    std::string name;
    while (in >> name) {
        int rows, cols;
        if (!(in >> rows >> cols))
            throw DataError("load_checkpoint: truncated record '" + name + "'");
        std::size_t k = 0;
        for (; k < params.size(); ++k)
            if (params[k].first == name) break;
        if (k == params.size())
            throw DataError("load_checkpoint: unknown parameter '" + name +
                            "' (checkpoint/model spec mismatch)");
        Tensor& t = *params[k].second;
        if (t.rows() != rows || t.cols() != cols)
            throw DataError("load_checkpoint: shape mismatch for '" + name + "': checkpoint " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                            t.shape_str());
        for (int i = 0; i < t.size(); ++i)
            if (!(in >> t[i]))
                throw DataError("load_checkpoint: truncated values for '" + name + "'");
        seen[k] = true;
    }
    for (std::size_t k = 0; k < params.size(); ++k)
        if (!seen[k])
            throw DataError("load_checkpoint: missing parameter '" + params[k].first +
                            "' (checkpoint/model spec mismatch)");
}

}  // namespace chronode
