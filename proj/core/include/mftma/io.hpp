#pragma once

#include <filesystem>
#include <string>

#include "mftma/manifold.hpp"
#include "mftma/net.hpp"
#include "mftma/synthdata.hpp"

namespace mftma {

// Binary containers are little-endian with fixed magics:
//   "MPD1"  dataset: header (P, D, d, r, counts, epsilon, seed), train
//           features row-major f64, true/train labels u32, mask u8, test
//           features, test labels.
//   "MPC1"  model snapshot: spec hash, epoch, per-layer dims + f64 weights.
//   "MFP1"  activation dump: u32 P/M/N, row-major f64 features, labels u32.

void write_dataset(const std::filesystem::path& path, const PermutedDataset& data);
PermutedDataset read_dataset(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path,
                       const PermutedDataset& data);

void write_model_snapshot(const std::filesystem::path& path,
                          const FeedforwardModel& model);
FeedforwardModel read_model_snapshot(const std::filesystem::path& path);

void write_activation_dump(const std::filesystem::path& path,
                           const ManifoldSet& set);
ManifoldSet read_activation_dump(const std::filesystem::path& path);

void write_activation_dump_csv(const std::filesystem::path& path,
                               const ManifoldSet& set);
ManifoldSet read_activation_dump_csv(const std::filesystem::path& path);

}  // namespace mftma
