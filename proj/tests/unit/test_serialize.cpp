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
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "dropscale/errors.hpp"
#include "dropscale/serialize.hpp"
#include "reference.hpp"

using namespace dropscale;

namespace {

ModelFile sample_model() {
  const auto spec = mlp_spec({3, 4, 2});
  ModelFile m;
  m.checkpoint.params = testsupport::random_params(spec, 5);
  m.checkpoint.params.layers[0].weights(0, 0) = 0.1;
  m.checkpoint.params.layers[0].weights(1, 2) = -std::numeric_limits<double>::denorm_min();
  m.checkpoint.params.layers[1].bias[1] = 1e-300;
  m.checkpoint.epoch = 12;
  m.checkpoint.val_error = 0.3;
  m.gate = DropoutGate{1, 0.3, DropoutConvention::inverted};
  return m;
}

std::string bytes(const ModelFile& m) {
  std::ostringstream out;
  write_model(out, m);
  return out.str();
}

DataErrorKind data_kind(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)read_model(in, "t");
  } catch (const DataError& e) {
    return e.kind();
  }
  FAIL("read_model accepted malformed input");
  return DataErrorKind::malformed;
}

}  // namespace

TEST_CASE("model round trip is bit exact") {
  const ModelFile m = sample_model();
  const std::string text = bytes(m);
  std::istringstream in(text);
  const ModelFile back = read_model(in);
  CHECK(back.checkpoint.params == m.checkpoint.params);
  CHECK(back.checkpoint.epoch == 12);
  CHECK(back.checkpoint.val_error == 0.3);
  CHECK(back.gate.position == 1);
  CHECK(back.gate.keep_prob == 0.3);
  CHECK(back.gate.convention == DropoutConvention::inverted);
  CHECK(bytes(back) == text);
}

TEST_CASE("model files on disk") {
  const auto dir = testsupport::temp_dir("serialize");
  const auto path = dir / "nested" / "model.txt";
  save_model(path, sample_model());
  CHECK(load_model(path).checkpoint.params == sample_model().checkpoint.params);
  CHECK_THROWS_AS(load_model(dir / "missing.txt"), IoError);
}

TEST_CASE("malformed model files") {
  const std::string good = bytes(sample_model());
  CHECK(data_kind("") == DataErrorKind::malformed);
  CHECK(data_kind("dropscale-model 2\n") == DataErrorKind::malformed);
  CHECK(data_kind("something else\n") == DataErrorKind::malformed);
  CHECK(data_kind(good.substr(0, good.size() / 2)) == DataErrorKind::malformed);

  std::string bad_number = good;
  bad_number.replace(bad_number.find("layer 3 4"), 9, "layer 3 x");
  CHECK(data_kind(bad_number) == DataErrorKind::malformed);

  std::istringstream in(good + "trailing\n");
  CHECK_THROWS_AS(read_model(in, "t"), DataError);

  // Error messages name the source and line.
  std::istringstream short_in("dropscale-model 1\nconvention nope\n");
  try {
    (void)read_model(short_in, "m.txt");
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("m.txt:2") != std::string::npos);
  }
}

TEST_CASE("scale round trip and checks") {
  const DropoutGate gate{0, 0.5, DropoutConvention::classical};
  ScaleFile sf{ConstraintSet::for_gate(gate), Vector{0.1, 0.9, 0.5, 0.5}, 7, 0.125};
  std::ostringstream out;
  write_scale(out, sf);
  std::istringstream in(out.str());
  const ScaleFile back = read_scale(in);
  CHECK(back.scale == sf.scale);
  CHECK(back.constraints == sf.constraints);
  CHECK(back.selected_epoch == 7);
  CHECK(back.val_error == 0.125);

  const auto dir = testsupport::temp_dir("serialize-scale");
  save_scale(dir / "scale.txt", sf);
  CHECK(load_scale(dir / "scale.txt", gate, 4).scale == sf.scale);

  auto expect_kind = [&](const DropoutGate& g, std::size_t width, DataErrorKind kind) {
    try {
      (void)load_scale(dir / "scale.txt", g, width);
      FAIL("accepted");
    } catch (const DataError& e) {
      CHECK(e.kind() == kind);
    }
  };
  expect_kind(DropoutGate{0, 0.5, DropoutConvention::inverted}, 4, DataErrorKind::malformed);
  expect_kind(DropoutGate{0, 0.4, DropoutConvention::classical}, 4, DataErrorKind::malformed);
  expect_kind(gate, 5, DataErrorKind::count_mismatch);

  ScaleFile infeasible{sf.constraints, Vector{1.5, -0.5, 0.5, 0.5}, 0, 0.0};
  save_scale(dir / "bad.txt", infeasible);
  CHECK_THROWS_AS(load_scale(dir / "bad.txt", gate, 4), DataError);
}

TEST_CASE("hexfloat") {
  CHECK(hexfloat(1.0) == "0x1p+0");
  CHECK(hexfloat(0.5) == "0x1p-1");
  CHECK(hexfloat(-0.0) == "-0x0p+0");
}
