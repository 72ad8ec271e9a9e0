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
#pragma once

/*
 Text formats for trained models and scale vectors.

 Numbers are written as C hexfloats so a write/read cycle reproduces every
 double bit for bit, and the same model always serializes to the same bytes.

   dropscale-model 1
   convention classical
   keep_prob 0x1p-1
   gate_position 1
   epoch 12
   val_error 0x1.2p-4
   layers 2
   layer 784 256 relu
   w <row of input_dim values>        (output_dim lines)
   b <output_dim values>
   ...

 A scale file records the constraint set next to s so loading it against
 the wrong convention or keep probability fails loudly.
*/

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "dropscale/constraints.hpp"
#include "dropscale/network.hpp"
#include "dropscale/trainer.hpp"

namespace dropscale {

struct ModelFile {
  Checkpoint checkpoint;
  DropoutGate gate;
};

void write_model(std::ostream& out, const ModelFile& model);
ModelFile read_model(std::istream& in, const std::string& source = "<stream>");
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

struct ScaleFile {
  ConstraintSet constraints;
  Vector scale;
  std::size_t selected_epoch = 0;
  double val_error = 0.0;
};

void write_scale(std::ostream& out, const ScaleFile& scale);
ScaleFile read_scale(std::istream& in, const std::string& source = "<stream>");
void save_scale(const std::filesystem::path& path, const ScaleFile& scale);

/// Loads a scale file and checks it against the gate it will be used with:
/// same constraint set, matching width, feasible within 1e-6.
ScaleFile load_scale(const std::filesystem::path& path, const DropoutGate& gate,
                     std::size_t width);

/// "%a" formatting of one double.
std::string hexfloat(double v);

/// Writes `text` to `path` atomically enough for our purposes (temp + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dropscale
