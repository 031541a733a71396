// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "splathead/bini.hpp"
#include "splathead/camera.hpp"
#include "splathead/cloud.hpp"
#include "splathead/decoders.hpp"
#include "splathead/gaussians.hpp"
#include "splathead/image.hpp"
#include "splathead/losses.hpp"
#include "splathead/symmetry.hpp"
#include "splathead/synth.hpp"

// File formats. Error convention: unreadable/unwritable files and malformed
// or truncated binary payloads raise IoError; schema violations in JSON
// documents and invalid in-memory data handed to a writer (wrong channel
// count, NaN) raise InvalidInputError.

namespace splathead {

// Portable float map. 1-channel images are written as "Pf", 3-channel as
// "PF", always little-endian (negative scale), rows bottom to top. Values
// are stored as 32-bit floats; NaN values are rejected, other channel
// counts too. Reading honors the scale sign (positive means big-endian) and
// ignores its magnitude.
void write_pfm(const std::string& path, const GeomImage& img);

// kind tags the result; the overload without it uses Depth for 1-channel
// files and Color for 3-channel ones.
GeomImage read_pfm(const std::string& path, ImageKind kind);
GeomImage read_pfm(const std::string& path);

// 8-bit preview. 1-channel images write grayscale, 3-channel RGB; values
// are clamped to [0, 1] and scaled to 0..255. Reading converts any PNG to a
// 3-channel color image with values in [0, 1].
void write_png(const std::string& path, const GeomImage& img);
GeomImage read_png(const std::string& path);

// Gaussian cloud PLY (binary_little_endian). Vertex properties follow the
// common splatting-viewer naming: x y z, scale_0..2 (log scales),
// rot_0..3 (w, x, y, z), opacity (logit), f_dc_0..2, f_rest_0..8, plus
// provenance (uchar) and grid_index (int). Properties are matched by name
// on read; grid_index is optional (-1 when absent), everything else is
// required. Round trips are exact at 32-bit float precision.
void write_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud read_gaussian_ply(const std::string& path);

// Grid point cloud PLY: one vertex (x y z float, grid_index uint) per valid
// cell, with the grid shape recorded as "comment splathead_grid W H".
void write_ply(const std::string& path, const GridPointCloud& cloud);
GridPointCloud read_grid_ply(const std::string& path);

// Camera intrinsics/extrinsics as a small JSON document.
void write_camera_json(const std::string& path, const Camera& camera);
Camera read_camera_json(const std::string& path);

// Every knob of the pipeline in one document. All fields have defaults, so
// {} is a valid config; unknown keys anywhere are rejected.
struct PipelineConfig {
  BiniConfig bini;
  // voxel_size 0 and z_margin -1 mean "resolve from the data"
  // (resolve_voxel_config).
  VoxelFilterConfig voxel{0.0, 1, -1.0};
  LossConfig loss;
  SynthConfig synth = SynthConfig::default_head();
  Camera camera;  // fallback camera for inputs without a camera file
  int expression_dim = 64;
  int hidden_width = 16;
  std::uint64_t seed = 0;

  PipelineConfig() { camera = synth_camera(synth); }
};

void write_config_json(const std::string& path, const PipelineConfig& cfg);
PipelineConfig read_config_json(const std::string& path);
// The serialized form of cfg (used by save and by tests checking identity).
std::string config_to_string(const PipelineConfig& cfg);
PipelineConfig config_from_string(const std::string& text);

// Regressor checkpoint: a 4-byte little-endian header length, a JSON header
// (version, dims, per-net name/widths/seed), then every net's parameters
// concatenated as little-endian 64-bit floats in declaration order.
void write_checkpoint(const std::string& path, const RegressorBundle& bundle);
RegressorBundle read_checkpoint(const std::string& path);

// FNV-1a 64-bit hash, used for golden output comparisons.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t hash_file(const std::string& path);

}  // namespace splathead
