#include "smallnoise/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace smallnoise {

namespace {

class TomlReader {
 public:
  explicit TomlReader(const std::string& text) : s_(text) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        table = &open_table(root);
      } else {
        std::string key = parse_key();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        if (table->contains(key)) error("duplicate key '" + key + "'");
        (*table)[key] = parse_value();
        skip_inline_ws();
        if (!eof() && peek() == '#') skip_comment();
        if (!eof() && peek() != '\n' && peek() != '\r') error("expected end of line");
      }
    }
    return root;
  }

 private:
  Json& open_table(Json& root) {
    bool array = s_.compare(pos_, 2, "[[") == 0;
    pos_ += array ? 2 : 1;
    skip_inline_ws();
    std::vector<std::string> path{parse_key()};
    skip_inline_ws();
    while (peek() == '.') {
      ++pos_;
      skip_inline_ws();
      path.push_back(parse_key());
      skip_inline_ws();
    }
    expect(']');
    if (array) expect(']');
    Json* node = &root;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      Json& next = (*node)[path[k]];
      if (next.is_null()) next = Json::object();
      node = next.is_array() ? &next.back() : &next;
    }
    Json& leaf = (*node)[path.back()];
    if (array) {
      if (leaf.is_null()) leaf = Json::array();
      if (!leaf.is_array()) error("key '" + path.back() + "' is not an array of tables");
      leaf.push_back(Json::object());
      return leaf.back();
    }
    if (leaf.is_null()) leaf = Json::object();
    if (!leaf.is_object()) error("key '" + path.back() + "' is not a table");
    return leaf;
  }

  std::string parse_key() {
    if (peek() == '"') return parse_string();
    std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      ++pos_;
    }
    if (start == pos_) error("expected key");
    return s_.substr(start, pos_ - start);
  }

  Json parse_value() {
    if (eof()) error("expected value");
    char c = peek();
    if (c == '"') return parse_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  Json parse_number() {
    std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                      peek() == '-' || peek() == '.' || peek() == '_')) {
      ++pos_;
    }
    std::string tok;
    for (char ch : s_.substr(start, pos_ - start)) {
      if (ch != '_') tok.push_back(ch);
    }
    if (tok.empty()) error("expected value");
    bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        double v = std::stod(tok, &used);
        if (used == tok.size()) return v;
      } else {
        long long v = std::stoll(tok, &used);
        if (used == tok.size()) return v;
      }
    } catch (const std::exception&) {
    }
    error("malformed number '" + tok + "'");
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (!eof() && peek() != '"') {
      char c = s_[pos_++];
      if (c == '\n') error("unterminated string");
      if (c == '\\') {
        if (eof()) error("unterminated escape");
        char e = s_[pos_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: error(std::string("unsupported escape \\") + e);
        }
      } else {
        out.push_back(c);
      }
    }
    expect('"');
    return out;
  }

  Json parse_array() {
    expect('[');
    Json arr = Json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        error("expected ',' or ']' in array");
      }
    }
  }

  Json parse_inline_table() {
    expect('{');
    Json obj = Json::object();
    skip_inline_ws();
    if (peek() == '}') {
      ++pos_;
      return obj;
    }
    while (true) {
      skip_inline_ws();
      std::string key = parse_key();
      skip_inline_ws();
      expect('=');
      skip_inline_ws();
      obj[key] = parse_value();
      skip_inline_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() == '}') {
        ++pos_;
        return obj;
      } else {
        error("expected ',' or '}' in inline table");
      }
    }
  }

  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }
  void expect(char c) {
    if (eof() || peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  [[noreturn]] void error(const std::string& what) const {
    int line = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) line += s_[i] == '\n';
    fail(ErrorKind::Config, "TOML line " + std::to_string(line) + ": " + what);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

int get_int(const Json& obj, const char* key) {
  if (!obj.contains(key) || !obj[key].is_number_integer()) {
    fail(ErrorKind::Config, std::string("missing or non-integer '") + key + "'");
  }
  return obj[key].get<int>();
}

Vec read_vector(const Json& arr, int d, const std::string& what) {
  if (!arr.is_array()) fail(ErrorKind::Config, what + " must be an array");
  if (static_cast<int>(arr.size()) != d) {
    fail(ErrorKind::DimensionMismatch,
         what + " has " + std::to_string(arr.size()) + " entries, expected " + std::to_string(d));
  }
  Vec v(d);
  for (int j = 0; j < d; ++j) {
    if (!arr[j].is_number()) fail(ErrorKind::Config, what + " entries must be numbers");
    v(j) = arr[j].get<double>();
  }
  return v;
}

Polynomial read_polynomial(const Json& table, int nvars, const std::string& what) {
  if (!table.is_array()) fail(ErrorKind::Config, what + " must be a list of monomials");
  std::vector<Term> terms;
  for (const auto& mono : table) {
    if (!mono.is_object()) fail(ErrorKind::Config, what + ": monomial must be an object");
    const Json* exps = nullptr;
    const Json* coef = nullptr;
    for (const char* k : {"exponents", "exp"}) {
      if (mono.contains(k)) exps = &mono[k];
    }
    for (const char* k : {"coefficient", "coef"}) {
      if (mono.contains(k)) coef = &mono[k];
    }
    if (!exps || !coef || !exps->is_array() || !coef->is_number()) {
      fail(ErrorKind::Config, what + ": monomial needs 'exponents' and 'coefficient'");
    }
    if (static_cast<int>(exps->size()) != nvars) {
      fail(ErrorKind::DimensionMismatch, what + ": monomial has " + std::to_string(exps->size()) +
                                             " exponents, expected " + std::to_string(nvars));
    }
    Term t{std::vector<int>(nvars), coef->get<double>()};
    for (int j = 0; j < nvars; ++j) {
      if (!(*exps)[j].is_number_integer()) fail(ErrorKind::Config, what + ": exponents must be integers");
      t.exponents[j] = (*exps)[j].get<int>();
    }
    terms.push_back(std::move(t));
  }
  return Polynomial(nvars, std::move(terms));
}

PolyField read_field(const Json& table, int d, const std::string& what) {
  if (!table.is_array()) fail(ErrorKind::Config, what + " must be an array of component tables");
  if (static_cast<int>(table.size()) != d) {
    fail(ErrorKind::DimensionMismatch, what + " has " + std::to_string(table.size()) +
                                           " components, expected d=" + std::to_string(d));
  }
  std::vector<Polynomial> comps;
  for (int k = 0; k < d; ++k) {
    comps.push_back(read_polynomial(table[k], d, what + "[" + std::to_string(k) + "]"));
  }
  return PolyField(std::move(comps));
}

std::vector<int> read_projection(const Json& config, int d) {
  std::vector<int> projection;
  if (config.contains("projection")) {
    if (!config["projection"].is_array()) fail(ErrorKind::Config, "projection must be an array");
    for (const auto& v : config["projection"]) {
      if (!v.is_number_integer()) fail(ErrorKind::Config, "projection entries must be integers");
      projection.push_back(v.get<int>());
    }
  }
  if (config.contains("projection_mask")) {
    if (!projection.empty()) fail(ErrorKind::Config, "give either projection or projection_mask");
    const auto& mask = config["projection_mask"];
    if (!mask.is_array() || static_cast<int>(mask.size()) != d) {
      fail(ErrorKind::DimensionMismatch, "projection_mask must have d=" + std::to_string(d) + " entries");
    }
    for (int j = 0; j < d; ++j) {
      bool on = mask[j].is_boolean() ? mask[j].get<bool>()
                                     : (mask[j].is_number() && mask[j].get<double>() != 0.0);
      if (on) projection.push_back(j);
    }
  }
  return projection;
}

SystemPtr load_builtin(const Json& config) {
  if (!config["builtin"].is_string()) fail(ErrorKind::Config, "builtin must be a string");
  std::string name = config["builtin"].get<std::string>();
  Params params;
  if (config.contains("params")) {
    if (!config["params"].is_object()) fail(ErrorKind::Config, "params must be an object");
    for (const auto& [k, v] : config["params"].items()) {
      if (!v.is_number()) fail(ErrorKind::Config, "parameter '" + k + "' must be a number");
      params[k] = v.get<double>();
    }
  }
  int d = 0;
  for (const auto& [n, dim] : {std::pair{"ou1d", 1}, {"langevin", 2}, {"flatmetric", 2}, {"heisenberg", 3}}) {
    if (name == n) d = dim;
  }
  if (d == 0) fail(ErrorKind::Config, "unknown builtin model '" + name + "'");
  return make_builtin(name, params, read_projection(config, d));
}

}  // namespace

Json parse_toml(const std::string& text) { return TomlReader(text).parse(); }

Json read_model_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  bool toml = path.size() >= 5 && path.compare(path.size() - 5, 5, ".toml") == 0;
  if (toml) return parse_toml(buf.str());
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::Config, "malformed JSON in '" + path + "': " + e.what());
  }
}

SystemPtr load_system(const Json& config) {
  if (!config.is_object()) fail(ErrorKind::Config, "model document must be an object");
  if (config.contains("builtin")) return load_builtin(config);
  if (!config.contains("dims") || !config["dims"].is_object()) {
    fail(ErrorKind::Config, "model document needs 'builtin' or 'dims'");
  }
  PolynomialModelSpec spec;
  const auto& dims = config["dims"];
  spec.d = get_int(dims, "d");
  spec.m = get_int(dims, "m");
  spec.l = get_int(dims, "l");
  if (spec.d <= 0 || spec.m <= 0) fail(ErrorKind::DimensionMismatch, "d and m must be positive");
  if (spec.l < 1 || spec.l > spec.d) {
    fail(ErrorKind::DimensionMismatch, "l=" + std::to_string(spec.l) + " must satisfy 1 <= l <= d=" +
                                           std::to_string(spec.d));
  }
  if (config.contains("name") && config["name"].is_string()) spec.name = config["name"].get<std::string>();
  spec.projection = read_projection(config, spec.d);
  if (!config.contains("fields") || !config["fields"].is_array()) {
    fail(ErrorKind::Config, "polynomial model needs a 'fields' array");
  }
  const auto& fields = config["fields"];
  if (static_cast<int>(fields.size()) != spec.m + 1) {
    fail(ErrorKind::DimensionMismatch, "fields has " + std::to_string(fields.size()) +
                                           " tables, expected m+1=" + std::to_string(spec.m + 1));
  }
  for (int i = 0; i <= spec.m; ++i) {
    spec.fields.push_back(read_field(fields[i], spec.d, "fields[" + std::to_string(i) + "]"));
  }
  spec.drift_eps = config.contains("drift_eps") ? read_field(config["drift_eps"], spec.d, "drift_eps")
                                                : PolyField::zero(spec.d, spec.d);
  if (config.contains("drift_eps_higher")) {
    int k = 2;
    for (const auto& f : config["drift_eps_higher"]) {
      spec.drift_eps_higher.push_back(read_field(f, spec.d, "drift_eps_higher[" + std::to_string(k++) + "]"));
    }
  }
  spec.x0 = Vec::Zero(spec.d);
  spec.x0_hat = Vec::Zero(spec.d);
  if (config.contains("start")) {
    const auto& st = config["start"];
    if (st.contains("x0")) spec.x0 = read_vector(st["x0"], spec.d, "start.x0");
    if (st.contains("x0_hat")) spec.x0_hat = read_vector(st["x0_hat"], spec.d, "start.x0_hat");
  }
  return make_polynomial_system(spec);
}

}  // namespace smallnoise
