#include "spindyn/model_file.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace spindyn::model {
namespace {

constexpr const char* kModule = "model-file";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, kModule, message); }

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : s_(text) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array = peek(1) == '[';
        advance(array ? 2 : 1);
        skip_ws();
        const auto path = key_path();
        skip_ws();
        expect(']');
        if (array) expect(']');
        end_of_line();
        table = array ? open_array_table(root, path) : open_table(root, path);
      } else {
        const auto path = key_path();
        skip_ws();
        expect('=');
        skip_ws();
        Json value = parse_value();
        assign(*table, path, std::move(value));
        end_of_line();
      }
    }
    return root;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }
  void advance(std::size_t n = 1) {
    for (std::size_t k = 0; k < n && !eof(); ++k) {
      if (s_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::kSyntax, "line " + std::to_string(line_) + ", column " + std::to_string(col_) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) error(std::string("expected '") + c + "'");
    advance();
  }

  void skip_ws() {
    while (peek() == ' ' || peek() == '\t') advance();
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') advance();
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') advance();
      if (peek() == '\n') {
        advance();
        continue;
      }
      break;
    }
  }

  // Whitespace, newlines and comments inside arrays.
  void skip_inside() {
    while (true) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        advance();
        continue;
      }
      break;
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') advance();
    if (eof()) return;
    if (peek() != '\n') error("unexpected trailing characters");
    advance();
  }

  static bool bare_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  }

  std::string key() {
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string out;
    while (bare_char(peek())) {
      out.push_back(peek());
      advance();
    }
    if (out.empty()) error("expected a key");
    return out;
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path{key()};
    skip_ws();
    while (peek() == '.') {
      advance();
      skip_ws();
      path.push_back(key());
      skip_ws();
    }
    return path;
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error("unterminated string");
      const char c = peek();
      advance();
      if (c == '"') break;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      const char e = peek();
      advance();
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: error(std::string("unsupported escape '\\") + e + "'");
      }
    }
    return out;
  }

  std::string literal_string() {
    expect('\'');
    std::string out;
    while (peek() != '\'') {
      if (eof() || peek() == '\n') error("unterminated string");
      out.push_back(peek());
      advance();
    }
    advance();
    return out;
  }

  Json parse_value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (s_.substr(pos_, 4) == "true") {
      advance(4);
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      advance(5);
      return false;
    }
    return parse_number();
  }

  Json parse_number() {
    std::string digits;
    bool is_float = false;
    const auto start_col = col_;
    while (!eof()) {
      const char c = peek();
      if ((c >= '0' && c <= '9') || c == '+' || c == '-') {
        digits.push_back(c);
      } else if (c == '.' || c == 'e' || c == 'E') {
        digits.push_back(c);
        is_float = true;
      } else if (c == '_') {
        // digit separator
      } else {
        break;
      }
      advance();
    }
    if (digits.empty()) error("expected a value");
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    if (*first == '+') ++first;
    if (!is_float) {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && p == last) return v;
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) {
      fail(ErrorKind::kSyntax, "line " + std::to_string(line_) + ", column " + std::to_string(start_col) +
                                   ": malformed number '" + digits + "'");
    }
    return v;
  }

  Json parse_array() {
    expect('[');
    Json arr = Json::array();
    skip_inside();
    while (peek() != ']') {
      arr.push_back(parse_value());
      skip_inside();
      if (peek() == ',') {
        advance();
        skip_inside();
      } else if (peek() != ']') {
        error("expected ',' or ']' in array");
      }
    }
    advance();
    return arr;
  }

  Json parse_inline_table() {
    expect('{');
    Json t = Json::object();
    skip_ws();
    while (peek() != '}') {
      const auto path = key_path();
      skip_ws();
      expect('=');
      skip_ws();
      assign(t, path, parse_value());
      skip_ws();
      if (peek() == ',') {
        advance();
        skip_ws();
      } else if (peek() != '}') {
        error("expected ',' or '}' in inline table");
      }
    }
    advance();
    return t;
  }

  Json* descend(Json& node, const std::string& k) {
    Json* next = &node[k];
    if (next->is_null()) *next = Json::object();
    if (next->is_array()) {
      if (next->empty() || !next->back().is_object()) error("key '" + k + "' is not a table");
      next = &next->back();
    }
    if (!next->is_object()) error("key '" + k + "' is not a table");
    return next;
  }

  Json* open_table(Json& root, const std::vector<std::string>& path) {
    Json* node = &root;
    for (const auto& k : path) node = descend(*node, k);
    return node;
  }

  Json* open_array_table(Json& root, const std::vector<std::string>& path) {
    Json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = descend(*node, path[i]);
    Json& arr = (*node)[path.back()];
    if (arr.is_null()) arr = Json::array();
    if (!arr.is_array()) error("key '" + path.back() + "' is not an array of tables");
    arr.push_back(Json::object());
    return &arr.back();
  }

  void assign(Json& table, const std::vector<std::string>& path, Json value) {
    Json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = descend(*node, path[i]);
    if (node->contains(path.back())) error("duplicate key '" + path.back() + "'");
    (*node)[path.back()] = std::move(value);
  }
};

// ---------------------------------------------------------------------------
// Typed accessors

std::string where(const std::string& ctx, const std::string& key) { return ctx.empty() ? key : ctx + "." + key; }

double number(const Json& t, const std::string& key, const std::string& ctx) {
  if (!t.contains(key)) fail(ErrorKind::kConfiguration, "missing key '" + where(ctx, key) + "'");
  const Json& v = t.at(key);
  if (!v.is_number()) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be a number");
  return v.get<double>();
}

double number_or(const Json& t, const std::string& key, double fallback, const std::string& ctx) {
  return t.contains(key) ? number(t, key, ctx) : fallback;
}

std::string text_or(const Json& t, const std::string& key, const std::string& fallback, const std::string& ctx) {
  if (!t.contains(key)) return fallback;
  if (!t.at(key).is_string()) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be a string");
  return t.at(key).get<std::string>();
}

Vec3 vec3(const Json& t, const std::string& key, const std::string& ctx) {
  const Json& v = t.at(key);
  if (!v.is_array() || v.size() != 3) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be a 3-vector");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be numeric");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

Mat3 mat3(const Json& t, const std::string& key, const std::string& ctx) {
  const Json& v = t.at(key);
  if (!v.is_array() || v.size() != 3) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be a 3x3 array");
  Mat3 out;
  for (std::size_t r = 0; r < 3; ++r) {
    const Json& row = v[r];
    if (!row.is_array() || row.size() != 3) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be a 3x3 array");
    for (std::size_t c = 0; c < 3; ++c) {
      if (!row[c].is_number()) fail(ErrorKind::kConfiguration, "'" + where(ctx, key) + "' must be numeric");
      out(static_cast<Index>(r), static_cast<Index>(c)) = row[c].get<double>();
    }
  }
  return out;
}

const Json& table(const Json& doc, const std::string& key) {
  static const Json empty = Json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) fail(ErrorKind::kConfiguration, "'" + key + "' must be a table");
  return doc.at(key);
}

double gamma_of(const Json& t, const std::string& ctx) {
  if (t.contains("gamma_Hz_per_T")) return number(t, "gamma_Hz_per_T", ctx);
  if (t.contains("g_factor")) return number(t, "g_factor", ctx) * spin::kBohrHzPerTesla;
  return spin::kElectronGamma;
}

spin::HyperfineTensor hyperfine_of(const Json& t, const std::string& ctx) {
  if (t.contains("A_tensor_Hz")) {
    spin::HyperfineTensor h;
    h.components = mat3(t, "A_tensor_Hz", ctx);
    return h;
  }
  if (t.contains("A_principal_Hz")) {
    const Vec3 euler = t.contains("euler_rad") ? vec3(t, "euler_rad", ctx) : Vec3::Zero();
    return spin::HyperfineTensor::from_principal(vec3(t, "A_principal_Hz", ctx), euler);
  }
  if (t.contains("A_zz_Hz")) return spin::HyperfineTensor::secular(number(t, "A_zz_Hz", ctx));
  if (t.contains("A_iso_Hz")) return spin::HyperfineTensor::isotropic(number(t, "A_iso_Hz", ctx));
  return {};
}

spin::SpinSpecies species_of(const Json& t, const std::string& ctx) {
  try {
    return spin::nuclear_species(text_or(t, "species", "", ctx));
  } catch (const Error& e) {
    fail(ErrorKind::kConfiguration, where(ctx, "species") + ": " + e.what());
  }
}

spin::SpinManifold manifold_of(const std::string& label, const Json& t) {
  const std::string ctx = "manifold." + label;
  spin::SpinManifold m;
  m.label = label;
  m.electron = spin::SpinSpecies::electron(number(t, "S", ctx), gamma_of(t, ctx));
  m.electron.label = label;
  m.D = number_or(t, "D_Hz", 0.0, ctx);
  m.E = number_or(t, "E_Hz", 0.0, ctx);
  if (t.contains("nucleus")) {
    const Json& list = t.at("nucleus");
    if (!list.is_array()) fail(ErrorKind::kConfiguration, "'" + ctx + ".nucleus' must be an array of tables");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string nctx = ctx + ".nucleus[" + std::to_string(i) + "]";
      spin::NuclearSpin n;
      n.species = species_of(list[i], nctx);
      n.hyperfine = hyperfine_of(list[i], nctx);
      if (list[i].contains("quadrupole_Hz")) n.quadrupole = mat3(list[i], "quadrupole_Hz", nctx);
      n.label = text_or(list[i], "label", "n" + std::to_string(i), nctx);
      m.nuclei.push_back(std::move(n));
    }
  }
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfiguration, ctx + ": " + e.what());
  }
  return m;
}

std::vector<spin::SpinManifold> declared_manifolds(const Json& doc) {
  std::vector<spin::SpinManifold> out;
  for (const auto& [label, t] : table(doc, "manifold").items()) {
    if (!t.is_object()) fail(ErrorKind::kConfiguration, "'manifold." + label + "' must be a table");
    out.push_back(manifold_of(label, t));
  }
  return out;
}

std::vector<spin::HyperfineTensor> block_hyperfine(const Json& t, std::size_t nuclei, const std::string& ctx) {
  std::vector<spin::HyperfineTensor> out(nuclei);
  if (!t.contains("hyperfine")) return out;
  const Json& list = t.at("hyperfine");
  if (!list.is_array()) fail(ErrorKind::kConfiguration, "'" + ctx + ".hyperfine' must be an array of tables");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string hctx = ctx + ".hyperfine[" + std::to_string(i) + "]";
    const double idx = number_or(list[i], "nucleus", 0.0, hctx);
    if (idx < 0 || idx >= static_cast<double>(nuclei) || idx != std::floor(idx)) {
      fail(ErrorKind::kConfiguration, "'" + hctx + ".nucleus' does not name a declared nucleus");
    }
    out[static_cast<std::size_t>(idx)] = hyperfine_of(list[i], hctx);
  }
  return out;
}

void add_transitions(photo::LevelModel& m, const Json& doc) {
  for (const auto& [label, t] : table(doc, "transition").items()) {
    const std::string ctx = "transition." + label;
    photo::TransitionLine line;
    line.label = label;
    line.block = text_or(t, "block", m.blocks.size() == 1 ? m.blocks.front().label : "", ctx);
    line.site = text_or(t, "spin", "", ctx);
    line.rabi_Hz = number_or(t, "rabi_Hz", 0.0, ctx);
    if (t.contains("lower_m")) line.lower_m = number(t, "lower_m", ctx);
    if (t.contains("condition")) {
      if (!t.at("condition").is_object()) fail(ErrorKind::kConfiguration, "'" + ctx + ".condition' must be a table");
      for (const auto& [spin_name, value] : t.at("condition").items()) {
        if (!value.is_number()) fail(ErrorKind::kConfiguration, "'" + ctx + ".condition." + spin_name + "' must be a number");
        line.conditions.emplace_back(spin_name, value.get<double>());
      }
    }
    m.add_transition(std::move(line));
  }
}

photo::LevelModel build_spin_pair(const Json& doc, const Vec3& field) {
  const Json& mt = table(doc, "model");
  photo::SpinPairParams p;
  p.field_T = field;
  if (mt.contains("nuclei")) {
    for (const auto& n : mt.at("nuclei")) {
      if (!n.is_string()) fail(ErrorKind::kConfiguration, "'model.nuclei' must list species names");
      try {
        p.nuclei.push_back(spin::nuclear_species(n.get<std::string>()));
      } catch (const Error& e) {
        fail(ErrorKind::kConfiguration, std::string("model.nuclei: ") + e.what());
      }
    }
  }
  const Json& a = table(doc, "defect_a");
  const Json& b = table(doc, "defect_b");
  const Json& tr = table(doc, "triplet");
  p.gamma_a = gamma_of(a, "defect_a");
  p.gamma_b = gamma_of(b, "defect_b");
  p.gamma_triplet = gamma_of(tr, "triplet");
  p.defect_a_hyperfine = block_hyperfine(a, p.nuclei.size(), "defect_a");
  p.defect_b_hyperfine = block_hyperfine(b, p.nuclei.size(), "defect_b");
  p.triplet_hyperfine = block_hyperfine(tr, p.nuclei.size(), "triplet");
  p.defect_b_drive_weight = number_or(b, "drive_weight", 1.0, "defect_b");
  p.D = number_or(tr, "D_Hz", p.D, "triplet");
  p.E = number_or(tr, "E_Hz", p.E, "triplet");
  p.collection_efficiency = number_or(table(doc, "collection"), "efficiency", 1.0, "collection");
  if (!doc.contains("rates")) fail(ErrorKind::kConfiguration, "missing [rates] table");
  for (const auto& [key, v] : table(doc, "rates").items()) {
    if (!v.is_number()) fail(ErrorKind::kConfiguration, "'rates." + key + "' must be a number");
    p.rates[key] = v.get<double>();
  }
  auto m = photo::build_spin_pair_model(p);
  add_transitions(m, doc);
  return m;
}

photo::LevelModel build_register(const Json& doc, const Vec3& field) {
  auto ms = declared_manifolds(doc);
  if (ms.size() != 1) fail(ErrorKind::kConfiguration, "a register model declares exactly one [manifold.<label>]");
  photo::RegisterParams p;
  p.manifold = ms.front();
  p.field_T = field;
  const Json& optics = table(doc, "optics");
  const Json& relax = table(doc, "relaxation");
  const Json& col = table(doc, "collection");
  p.pump_rate = number_or(optics, "pump_rate", p.pump_rate, "optics");
  p.electron_t1 = number_or(relax, "electron_T1_s", 0.0, "relaxation");
  p.electron_t2 = number_or(relax, "electron_T2_s", 0.0, "relaxation");
  p.nuclear_t1 = number_or(relax, "nuclear_T1_s", 0.0, "relaxation");
  p.nuclear_t2 = number_or(relax, "nuclear_T2_s", 0.0, "relaxation");
  p.emission_rate = number_or(col, "emission_rate", p.emission_rate, "collection");
  p.dark_weight = number_or(col, "dark_weight", p.dark_weight, "collection");
  auto m = photo::build_register_model(p);
  add_transitions(m, doc);
  return m;
}

}  // namespace

Json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

ModelConfig parse_model(std::string_view text, std::string source) {
  ModelConfig cfg;
  cfg.doc = parse_toml(text);
  cfg.source = std::move(source);
  cfg.hash = fnv1a_hex(text);
  const Json& mt = table(cfg.doc, "model");
  cfg.kind = text_or(mt, "kind", "manifolds", "model");
  if (cfg.kind != "spin_pair" && cfg.kind != "register" && cfg.kind != "manifolds") {
    fail(ErrorKind::kConfiguration, "unknown model kind '" + cfg.kind + "'");
  }
  if (mt.contains("B_T")) cfg.field_T = vec3(mt, "B_T", "model");
  return cfg;
}

ModelConfig load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model(buf.str(), path);
  } catch (const Error& e) {
    throw Error(e.kind(), e.module(), path + ": " + e.what());
  }
}

photo::LevelModel ModelConfig::build(const Vec3& field) const {
  if (kind == "spin_pair") return build_spin_pair(doc, field);
  if (kind == "register") return build_register(doc, field);
  fail(ErrorKind::kConfiguration, "model kind '" + kind + "' has no level model; set [model] kind");
}

std::vector<spin::SpinManifold> ModelConfig::manifolds() const {
  if (kind != "spin_pair") return declared_manifolds(doc);
  // The spin-pair blocks seen as independent manifolds.
  std::vector<spin::SpinManifold> out;
  const Json& mt = table(doc, "model");
  std::vector<spin::SpinSpecies> nuclei;
  if (mt.contains("nuclei"))
    for (const auto& n : mt.at("nuclei")) nuclei.push_back(spin::nuclear_species(n.get<std::string>()));
  auto make = [&](const std::string& label, double s, const Json& t) {
    spin::SpinManifold m;
    m.label = label;
    m.electron = spin::SpinSpecies::electron(s, gamma_of(t, label));
    if (s > 0.5) {
      m.D = number_or(t, "D_Hz", 1.0e9, label);
      m.E = number_or(t, "E_Hz", 0.2e9, label);
    }
    const auto hf = block_hyperfine(t, nuclei.size(), label);
    for (std::size_t i = 0; i < nuclei.size(); ++i) m.nuclei.push_back({nuclei[i], hf[i], std::nullopt, "n" + std::to_string(i)});
    return m;
  };
  out.push_back(make("triplet", 1.0, table(doc, "triplet")));
  out.push_back(make("defect_a", 0.5, table(doc, "defect_a")));
  if (number_or(table(doc, "defect_b"), "drive_weight", 1.0, "defect_b") != 0.0) {
    out.push_back(make("defect_b", 0.5, table(doc, "defect_b")));
  }
  return out;
}

ModelConfig default_fieldmap_model() {
  return parse_model(
      "[manifold.triplet]\nS = 1.0\nD_Hz = 1.0e9\nE_Hz = 0.2e9\n\n"
      "[manifold.doublet]\nS = 0.5\n",
      "<default>");
}

}  // namespace spindyn::model
