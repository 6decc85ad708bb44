#pragma once

#include <string>
#include <vector>

#include "noiselab/rng.hpp"
#include "noiselab/tensor.hpp"

namespace noiselab {

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

/// One split of a dataset: images N x C x H x W (float, standardized with
/// train-split statistics), labels in [0, K).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  Split split = Split::Train;
  int num_classes = 0;

  Index size() const { return images.numel() == 0 ? 0 : images.dim(0); }
  Index channels() const { return images.dim(1); }
};

/// Train/val/test triple produced by the loaders. The val split is a seeded,
/// deterministic 10% cut of the training data; normalization statistics come
/// from the train split only.
struct DatasetBundle {
  Dataset train, val, test;
  int num_classes = 0;
  std::string name;
};

inline constexpr std::uint64_t kDefaultSplitSeed = 9001;

/// Parse IDX-format image/label pairs (big-endian, magic 0x803 / 0x801) from
/// `dir`. variant selects the file basenames ("mnist" and "fashion" use the
/// standard train-images-idx3-ubyte etc. names).
DatasetBundle load_mnist_like(const std::string& dir, const std::string& variant = "mnist",
                              double val_fraction = 0.1,
                              std::uint64_t split_seed = kDefaultSplitSeed);

/// Parse the CIFAR-10 binary batches (5 train + 1 test, 10000 x 3073 bytes
/// each) from `dir`.
DatasetBundle load_cifar10(const std::string& dir, double val_fraction = 0.1,
                           std::uint64_t split_seed = kDefaultSplitSeed);

/// K Gaussian clusters in `dim` dimensions with centers `separation` apart;
/// linearly separable for large separation. Images are (dim,1,1).
DatasetBundle synthetic_gaussian_blobs(int num_classes, Index n_per_class, Index dim,
                                       double separation, std::uint64_t seed);

/// Class-stratified deterministic subset of n samples (equal per-class counts
/// up to +-1, seeded selection inside each class, original order preserved).
Dataset subset(const Dataset& ds, Index n, std::uint64_t seed);

/// Look up a dataset directory: explicit argument wins, then $NOISELAB_DATA,
/// then "./data".
std::string resolve_data_dir(const std::string& explicit_dir);

// ---------------------------------------------------------------------------
// Procedural corpus in the real on-disk formats
// ---------------------------------------------------------------------------

/// Write a procedurally generated digit-style corpus (28x28 grayscale, 10
/// classes) as IDX files that load_mnist_like can parse.
void write_synthetic_idx_corpus(const std::string& dir, Index n_train, Index n_test,
                                std::uint64_t seed);

/// Write a procedurally generated 32x32x3 10-class corpus as CIFAR-10 binary
/// batches (exactly 5 x 10000 train records + 10000 test records).
void write_synthetic_cifar_corpus(const std::string& dir, std::uint64_t seed);

}  // namespace noiselab
