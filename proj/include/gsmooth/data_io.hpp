#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gsmooth/image.hpp"
#include "gsmooth/layers.hpp"

namespace gsmooth {

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 0;
  std::string split;       // train / val / test
  std::string provenance;  // human-readable origin
};

void validate_dataset(const Dataset& ds, const std::string& where);

// Big-endian IDX pair (images magic 0x803, labels magic 0x801); pixels are
// rescaled to [0,1]. Parse failures report the byte offset.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

// Anti-aliased grayscale shapes (disk, square, triangle, cross) at random
// position/scale on a dark background; classes are exactly balanced and
// the whole set is a pure function of the seed.
Dataset generate_synthetic_shapes(int count, int size, int classes,
                                  std::uint64_t seed);

// Writes the dataset as a big-endian IDX pair (the same layout
// load_mnist_idx parses); pixels quantize to u8.
void save_dataset_idx(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path);

// Disjoint, seed-stable shuffle split; first part gets `first_count` items.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, int first_count,
                                          std::uint64_t seed);

// "GSM1" checkpoint: magic, version u32, tensor count u32, then per tensor
// (u16 name length, name, u8 rank, u32 dims..., f32 payload), closed by a
// CRC32 of everything after the magic. Round trips are bit-exact.
void save_checkpoint(const ParamList& params, const std::string& path);

struct LoadedTensor {
  std::string name;
  std::vector<int> dims;
  ArrayF data;
};
std::vector<LoadedTensor> load_checkpoint(const std::string& path);
// Copies loaded values into an existing parameter list; every name must
// match with identical dims.
void load_checkpoint_into(const std::string& path, ParamList& params);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

// RFC-4180 CSV.
std::string csv_escape(const std::string& field);
void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Binary PGM (P5) / PPM (P6), maxval 255, plus raw f32 with a 12-byte
// little-endian (height, width, channels) header.
void write_image(const Image& im, const std::string& path);
Image read_image(const std::string& path);

}  // namespace gsmooth
