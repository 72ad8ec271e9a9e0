/* Copyright 2026 The dropscale Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */
#include "dropscale/serialize.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "dropscale/errors.hpp"

namespace dropscale {

namespace {

constexpr std::string_view kModelMagic = "dropscale-model";
constexpr std::string_view kScaleMagic = "dropscale-scale";
constexpr int kFormatVersion = 1;

// Line-oriented reader: every line is a keyword followed by fields.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::vector<std::string> expect(std::string_view keyword, std::size_t min_fields = 0) {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file, expected '" +
                                       std::string(keyword) + "'");
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string tok; ss >> tok;) fields.push_back(tok);
    if (fields.empty() || fields.front() != keyword) {
      fail("expected '" + std::string(keyword) + "'");
    }
    fields.erase(fields.begin());
    if (fields.size() < min_fields) fail("too few fields after '" + std::string(keyword) + "'");
    return fields;
  }

  std::string one(std::string_view keyword) {
    auto f = expect(keyword, 1);
    if (f.size() != 1) fail("expected one value after '" + std::string(keyword) + "'");
    return f.front();
  }

  double number(const std::string& text) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0' || errno == ERANGE) fail("bad number '" + text + "'");
    return v;
  }

  std::size_t count(const std::string& text) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
      fail("bad count '" + text + "'");
    }
    return static_cast<std::size_t>(std::stoull(text));
  }

  std::vector<double> numbers(std::string_view keyword, std::size_t n) {
    auto f = expect(keyword);
    if (f.size() != n) {
      fail("'" + std::string(keyword) + "' has " + std::to_string(f.size()) +
           " values, expected " + std::to_string(n));
    }
    std::vector<double> out;
    out.reserve(n);
    for (const auto& t : f) out.push_back(number(t));
    return out;
  }

  // Anything after the last record other than blank lines is an error.
  void finish() {
    for (std::string line; std::getline(in_, line);) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") != std::string::npos) fail("unexpected trailing content");
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(DataErrorKind::malformed,
                    source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

void write_values(std::ostream& out, std::string_view keyword, std::span<const double> values) {
  out << keyword;
  for (double v : values) out << ' ' << hexfloat(v);
  out << '\n';
}

void check_header(LineReader& r, std::string_view magic) {
  const auto version = r.one(magic);
  if (version != std::to_string(kFormatVersion)) {
    r.fail("unsupported format version " + version);
  }
}

}  // namespace

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_model(std::ostream& out, const ModelFile& model) {
  const auto& params = model.checkpoint.params;
  out << kModelMagic << ' ' << kFormatVersion << '\n';
  out << "convention " << to_string(model.gate.convention) << '\n';
  out << "keep_prob " << hexfloat(model.gate.keep_prob) << '\n';
  out << "gate_position " << model.gate.position << '\n';
  out << "epoch " << model.checkpoint.epoch << '\n';
  out << "val_error " << hexfloat(model.checkpoint.val_error) << '\n';
  out << "layers " << params.layers.size() << '\n';
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const LayerSpec& ls = params.spec[i];
    const Layer& layer = params.layers[i];
    out << "layer " << ls.input_dim << ' ' << ls.output_dim << ' ' << to_string(ls.activation)
        << '\n';
    for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
      write_values(out, "w", layer.weights.row(r));
    }
    write_values(out, "b", layer.bias.span());
  }
}

ModelFile read_model(std::istream& in, const std::string& source) {
  LineReader r(in, source);
  check_header(r, kModelMagic);
  ModelFile model;
  try {
    model.gate.convention = parse_convention(r.one("convention"));
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  model.gate.keep_prob = r.number(r.one("keep_prob"));
  model.gate.position = r.count(r.one("gate_position"));
  model.checkpoint.epoch = r.count(r.one("epoch"));
  model.checkpoint.val_error = r.number(r.one("val_error"));
  const std::size_t layers = r.count(r.one("layers"));
  if (layers == 0) r.fail("model has no layers");

  NetworkSpec spec;
  std::vector<Layer> params;
  for (std::size_t i = 0; i < layers; ++i) {
    const auto f = r.expect("layer", 3);
    if (f.size() != 3) r.fail("'layer' needs input_dim output_dim activation");
    LayerSpec ls{r.count(f[0]), r.count(f[1]), Activation::relu};
    try {
      ls.activation = parse_activation(f[2]);
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
    Layer layer{Matrix(ls.output_dim, ls.input_dim), Vector(ls.output_dim)};
    for (std::size_t row = 0; row < ls.output_dim; ++row) {
      const auto values = r.numbers("w", ls.input_dim);
      std::copy(values.begin(), values.end(), layer.weights.row(row).begin());
    }
    layer.bias = Vector(r.numbers("b", ls.output_dim));
    spec.push_back(ls);
    params.push_back(std::move(layer));
  }
  try {
    validate_spec(spec);
    (void)model.gate.width(spec);
  } catch (const ContractError& e) {
    r.fail(e.what());
  }
  r.finish();
  model.checkpoint.params = NetworkParams{std::move(spec), std::move(params)};
  return model;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
  std::ostringstream out;
  write_model(out, model);
  write_text_file(path, out.str());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  return read_model(in, path.string());
}

void write_scale(std::ostream& out, const ScaleFile& scale) {
  out << kScaleMagic << ' ' << kFormatVersion << '\n';
  out << "mean_target " << hexfloat(scale.constraints.mean_target) << '\n';
  out << "upper_bound " << hexfloat(scale.constraints.upper_bound) << '\n';
  out << "selected_epoch " << scale.selected_epoch << '\n';
  out << "val_error " << hexfloat(scale.val_error) << '\n';
  out << "width " << scale.scale.size() << '\n';
  write_values(out, "s", scale.scale.span());
}

ScaleFile read_scale(std::istream& in, const std::string& source) {
  LineReader r(in, source);
  check_header(r, kScaleMagic);
  ScaleFile scale;
  scale.constraints.mean_target = r.number(r.one("mean_target"));
  scale.constraints.upper_bound = r.number(r.one("upper_bound"));
  scale.selected_epoch = r.count(r.one("selected_epoch"));
  scale.val_error = r.number(r.one("val_error"));
  const std::size_t width = r.count(r.one("width"));
  scale.scale = Vector(r.numbers("s", width));
  r.finish();
  try {
    scale.constraints.validate();
  } catch (const ContractError& e) {
    r.fail(e.what());
  }
  return scale;
}

void save_scale(const std::filesystem::path& path, const ScaleFile& scale) {
  std::ostringstream out;
  write_scale(out, scale);
  write_text_file(path, out.str());
}

ScaleFile load_scale(const std::filesystem::path& path, const DropoutGate& gate,
                     std::size_t width) {
  std::istringstream in(read_text_file(path));
  ScaleFile scale = read_scale(in, path.string());
  const ConstraintSet expected = ConstraintSet::for_gate(gate);
  if (!(scale.constraints == expected)) {
    throw DataError(DataErrorKind::malformed,
                    path.string() + ": scale vector was fitted for mean " +
                        hexfloat(scale.constraints.mean_target) + ", bound " +
                        hexfloat(scale.constraints.upper_bound) + "; the model's " +
                        std::string(to_string(gate.convention)) + " gate needs mean " +
                        hexfloat(expected.mean_target) + ", bound " +
                        hexfloat(expected.upper_bound));
  }
  if (scale.scale.size() != width) {
    throw DataError(DataErrorKind::count_mismatch,
                    path.string() + ": scale vector has " + std::to_string(scale.scale.size()) +
                        " entries, the gate has " + std::to_string(width) + " units");
  }
  if (!scale.constraints.feasible(scale.scale, 1e-6)) {
    throw DataError(DataErrorKind::malformed, path.string() + ": scale vector is infeasible");
  }
  return scale;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

}  // namespace dropscale
