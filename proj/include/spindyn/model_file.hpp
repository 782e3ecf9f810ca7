#pragma once

// Model files: a TOML subset (tables, arrays of tables, inline tables,
// strings, numbers, booleans, arrays) read into ordered JSON, and the
// builders that turn a document into spin manifolds or a level model.

#include "spindyn/common.hpp"
#include "spindyn/photodynamics.hpp"
#include "spindyn/spin_core.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace spindyn::model {

using Json = nlohmann::ordered_json;

// Throws Error(kSyntax) with line and column on malformed input.
Json parse_toml(std::string_view text);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct ModelConfig {
  Json doc;
  std::string kind;  // "spin_pair", "register" or "manifolds"
  Vec3 field_T = Vec3::Zero();
  std::string source;  // path or "<inline>"
  std::string hash;    // FNV-1a of the file text

  // Level model at `field`; not available for the "manifolds" kind.
  photo::LevelModel build(const Vec3& field) const;
  photo::LevelModel build() const { return build(field_T); }
  // Spin manifolds for stick spectra and field maps.
  std::vector<spin::SpinManifold> manifolds() const;
};

ModelConfig parse_model(std::string_view text, std::string source = "<inline>");
// Missing or unreadable file -> Error(kIo) naming the path.
ModelConfig load_model(const std::string& path);

// Default model for field maps: S = 1 with D = 1 GHz, E = 0.2 GHz, and a bare
// S = 1/2 center branch.
ModelConfig default_fieldmap_model();

}  // namespace spindyn::model
