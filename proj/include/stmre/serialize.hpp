#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stmre/layers.hpp"

namespace stmre {

// Parameter file layout, all integers little-endian:
//
//   magic        8 bytes  "STMRPARM"
//   version      u32      1
//   descriptor   u32 length + UTF-8 bytes (architecture, "key=value;...")
//   count        u32
//   count x      u32 name length + name bytes, u32 rank, rank x u64 dims
//   payload      float32 values of every parameter, in manifest order

inline constexpr char kParamMagic[8] = {'S', 'T', 'M', 'R', 'P', 'A', 'R', 'M'};
inline constexpr std::uint32_t kParamVersion = 1;

struct ParamRecord {
    std::string name;
    Tensor value;
};

struct ParamFile {
    std::string descriptor;
    std::vector<ParamRecord> params;
};

void write_param_file(const std::filesystem::path& path, const std::string& descriptor,
                      const std::vector<NamedParam<float>>& params);

ParamFile read_param_file(const std::filesystem::path& path);

/// Copies file values into `params`. Names, order and shapes must match exactly.
void load_params(const ParamFile& file, const std::vector<NamedParam<float>>& params);

}  // namespace stmre
