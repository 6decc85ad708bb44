#include "noiselab/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

namespace noiselab {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open ", path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
  in.read(reinterpret_cast<char*>(buf.data()), len);
  check(in.good(), "short read on ", path);
  return buf;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::string& path) {
  check(off + 4 <= buf.size(), path, ": truncated header at offset ", off);
  return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
         (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

struct RawData {
  std::vector<std::uint8_t> pixels;  // N*C*H*W
  std::vector<int> labels;
  Index n = 0, c = 0, h = 0, w = 0;
};

RawData parse_idx_pair(const std::string& images_path, const std::string& labels_path,
                       int num_classes) {
  const auto ib = read_file(images_path);
  const std::uint32_t magic = read_be32(ib, 0, images_path);
  check(magic == 0x00000803u, images_path, ": bad image magic 0x", std::hex, magic,
        " at offset 0 (want 0x803)");
  RawData raw;
  raw.n = read_be32(ib, 4, images_path);
  raw.h = read_be32(ib, 8, images_path);
  raw.w = read_be32(ib, 12, images_path);
  raw.c = 1;
  const std::size_t want = 16 + static_cast<std::size_t>(raw.n * raw.h * raw.w);
  check(ib.size() == want, images_path, ": expected ", want, " bytes for ", raw.n, "x", raw.h,
        "x", raw.w, ", got ", ib.size());
  raw.pixels.assign(ib.begin() + 16, ib.end());

  const auto lb = read_file(labels_path);
  const std::uint32_t lmagic = read_be32(lb, 0, labels_path);
  check(lmagic == 0x00000801u, labels_path, ": bad label magic 0x", std::hex, lmagic,
        " at offset 0 (want 0x801)");
  const Index ln = read_be32(lb, 4, labels_path);
  check(ln == raw.n, labels_path, ": ", ln, " labels for ", raw.n, " images");
  check(lb.size() == 8 + static_cast<std::size_t>(ln), labels_path, ": expected ", 8 + ln,
        " bytes, got ", lb.size());
  raw.labels.resize(static_cast<std::size_t>(ln));
  for (Index i = 0; i < ln; ++i) {
    const int v = lb[static_cast<std::size_t>(8 + i)];
    check(v >= 0 && v < num_classes, labels_path, ": label value ", v, " at offset ", 8 + i,
          " outside [0,", num_classes, ")");
    raw.labels[static_cast<std::size_t>(i)] = v;
  }
  return raw;
}

Tensor to_float_chw(const RawData& raw) {
  Tensor t = Tensor::zeros({raw.n, raw.c, raw.h, raw.w});
  for (Index i = 0; i < t.numel(); ++i)
    t.data[i] = static_cast<float>(raw.pixels[static_cast<std::size_t>(i)]) / 255.0f;
  return t;
}

Dataset take_rows(const Tensor& images, const std::vector<int>& labels,
                  const std::vector<Index>& rows, Split split, int num_classes) {
  const Index c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const Index stride = c * h * w;
  Dataset ds;
  ds.split = split;
  ds.num_classes = num_classes;
  ds.images = Tensor::zeros({static_cast<Index>(rows.size()), c, h, w});
  ds.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index src = rows[i];
    std::copy_n(images.data.data() + src * stride, stride,
                ds.images.data.data() + static_cast<Index>(i) * stride);
    ds.labels[i] = labels[static_cast<std::size_t>(src)];
  }
  return ds;
}

/// Seeded train/val membership, then per-channel standardization with
/// statistics from the train part only.
DatasetBundle assemble_bundle(Tensor train_images, std::vector<int> train_labels,
                              Tensor test_images, std::vector<int> test_labels, int num_classes,
                              const std::string& name, double val_fraction,
                              std::uint64_t split_seed) {
  const Index n = train_images.dim(0);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  RngStream rng = RngStream::root(split_seed).fork(StreamTag::Data);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.bits_at(static_cast<std::uint64_t>(i)) %
                                       static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const Index n_val = static_cast<Index>(std::llround(val_fraction * static_cast<double>(n)));
  std::vector<Index> train_rows(order.begin(), order.end() - n_val);
  std::vector<Index> val_rows(order.end() - n_val, order.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());

  DatasetBundle b;
  b.name = name;
  b.num_classes = num_classes;
  b.train = take_rows(train_images, train_labels, train_rows, Split::Train, num_classes);
  b.val = take_rows(train_images, train_labels, val_rows, Split::Val, num_classes);
  std::vector<Index> test_rows(static_cast<std::size_t>(test_images.dim(0)));
  std::iota(test_rows.begin(), test_rows.end(), Index(0));
  b.test = take_rows(test_images, test_labels, test_rows, Split::Test, num_classes);

  // Per-channel statistics of the train split, in double.
  const Index c = b.train.images.dim(1);
  const Index plane = b.train.images.dim(2) * b.train.images.dim(3);
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0),
      sq(static_cast<std::size_t>(c), 0.0);
  const Index tn = b.train.images.dim(0);
  for (Index i = 0; i < tn; ++i)
    for (Index ch = 0; ch < c; ++ch) {
      const float* p = b.train.images.data.data() + (i * c + ch) * plane;
      for (Index k = 0; k < plane; ++k) {
        sum[static_cast<std::size_t>(ch)] += p[k];
        sq[static_cast<std::size_t>(ch)] += static_cast<double>(p[k]) * p[k];
      }
    }
  const double cnt = static_cast<double>(tn * plane);
  std::vector<double> mean(static_cast<std::size_t>(c)), sd(static_cast<std::size_t>(c));
  for (Index ch = 0; ch < c; ++ch) {
    mean[static_cast<std::size_t>(ch)] = sum[static_cast<std::size_t>(ch)] / cnt;
    const double var = std::max(
        0.0, sq[static_cast<std::size_t>(ch)] / cnt -
                 mean[static_cast<std::size_t>(ch)] * mean[static_cast<std::size_t>(ch)]);
    sd[static_cast<std::size_t>(ch)] = std::max(std::sqrt(var), 1e-12);
  }
  auto standardize = [&](Dataset& ds) {
    const Index dn = ds.images.dim(0);
    for (Index i = 0; i < dn; ++i)
      for (Index ch = 0; ch < c; ++ch) {
        float* p = ds.images.data.data() + (i * c + ch) * plane;
        for (Index k = 0; k < plane; ++k)
          p[k] = static_cast<float>((p[k] - mean[static_cast<std::size_t>(ch)]) /
                                    sd[static_cast<std::size_t>(ch)]);
      }
  };
  standardize(b.train);
  standardize(b.val);
  standardize(b.test);
  return b;
}

}  // namespace

std::string resolve_data_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("NOISELAB_DATA"); env && *env) return env;
  return "data";
}

DatasetBundle load_mnist_like(const std::string& dir, const std::string& variant,
                              double val_fraction, std::uint64_t split_seed) {
  check(variant == "mnist" || variant == "fashion", "unknown mnist-like variant ", variant);
  const std::string base = dir + "/";
  RawData train = parse_idx_pair(base + "train-images-idx3-ubyte",
                                 base + "train-labels-idx1-ubyte", 10);
  RawData test =
      parse_idx_pair(base + "t10k-images-idx3-ubyte", base + "t10k-labels-idx1-ubyte", 10);
  check(train.h == test.h && train.w == test.w, "train/test image dims differ");
  return assemble_bundle(to_float_chw(train), train.labels, to_float_chw(test), test.labels, 10,
                         variant, val_fraction, split_seed);
}

DatasetBundle load_cifar10(const std::string& dir, double val_fraction,
                           std::uint64_t split_seed) {
  constexpr Index kRecord = 3073;
  constexpr Index kPerBatch = 10000;
  auto parse_batch = [&](const std::string& path, Tensor& images, std::vector<int>& labels,
                         Index offset) {
    const auto buf = read_file(path);
    check(buf.size() == static_cast<std::size_t>(kRecord * kPerBatch), path, ": expected ",
          kRecord * kPerBatch, " bytes (10000 records x 3073), got ", buf.size());
    for (Index r = 0; r < kPerBatch; ++r) {
      const std::uint8_t* rec = buf.data() + r * kRecord;
      const int label = rec[0];
      check(label >= 0 && label < 10, path, ": label value ", label, " in record ", r);
      labels[static_cast<std::size_t>(offset + r)] = label;
      float* dst = images.data.data() + (offset + r) * 3072;
      for (Index k = 0; k < 3072; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
    }
  };
  Tensor train_images = Tensor::zeros({5 * kPerBatch, 3, 32, 32});
  std::vector<int> train_labels(static_cast<std::size_t>(5 * kPerBatch));
  for (int b = 1; b <= 5; ++b)
    parse_batch(dir + "/data_batch_" + std::to_string(b) + ".bin", train_images, train_labels,
                (b - 1) * kPerBatch);
  Tensor test_images = Tensor::zeros({kPerBatch, 3, 32, 32});
  std::vector<int> test_labels(static_cast<std::size_t>(kPerBatch));
  parse_batch(dir + "/test_batch.bin", test_images, test_labels, 0);
  return assemble_bundle(std::move(train_images), std::move(train_labels),
                         std::move(test_images), std::move(test_labels), 10, "cifar10",
                         val_fraction, split_seed);
}

DatasetBundle synthetic_gaussian_blobs(int num_classes, Index n_per_class, Index dim,
                                       double separation, std::uint64_t seed) {
  check(num_classes >= 2, "blobs need K >= 2");
  check(separation >= 0.0, "separation must be >= 0");
  check(n_per_class >= 2 && dim >= 1, "blobs need n_per_class >= 2, dim >= 1");
  RngStream rng = RngStream::root(seed).fork(StreamTag::Synth);

  // Class centers: separation-scaled random directions.
  std::vector<double> centers(static_cast<std::size_t>(num_classes * dim));
  for (int k = 0; k < num_classes; ++k) {
    RngStream cs = rng.fork(1000 + static_cast<std::uint64_t>(k));
    double norm2 = 0.0;
    for (Index d = 0; d < dim; ++d) {
      const double v = cs.normal_at(static_cast<std::uint64_t>(d));
      centers[static_cast<std::size_t>(k * dim + d)] = v;
      norm2 += v * v;
    }
    const double scale = separation / std::max(std::sqrt(norm2), 1e-12);
    for (Index d = 0; d < dim; ++d) centers[static_cast<std::size_t>(k * dim + d)] *= scale;
  }

  auto make_part = [&](Index per_class, std::uint64_t tag) {
    const Index n = per_class * num_classes;
    Tensor images = Tensor::zeros({n, dim, 1, 1});
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const int k = static_cast<int>(i % num_classes);
      labels[static_cast<std::size_t>(i)] = k;
      RngStream ss = rng.fork(tag).fork(static_cast<std::uint64_t>(i));
      for (Index d = 0; d < dim; ++d)
        images.data[i * dim + d] =
            static_cast<float>(centers[static_cast<std::size_t>(k * dim + d)] +
                               ss.normal_at(static_cast<std::uint64_t>(d)));
    }
    return std::pair{std::move(images), std::move(labels)};
  };
  auto [train_images, train_labels] = make_part(n_per_class, 1);
  auto [test_images, test_labels] = make_part(std::max<Index>(n_per_class / 4, 1), 2);
  return assemble_bundle(std::move(train_images), std::move(train_labels),
                         std::move(test_images), std::move(test_labels), num_classes, "blobs",
                         0.1, seed);
}

Dataset subset(const Dataset& ds, Index n, std::uint64_t seed) {
  const int k = ds.num_classes;
  check(n >= k, "subset of ", n, " cannot cover ", k, " classes");
  check(n <= ds.size(), "subset of ", n, " from ", ds.size(), " samples");
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(k));
  for (Index i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  // Equal per-class targets, remainder to the smallest class ids; overflow
  // from short classes spills to the next class with spare samples.
  std::vector<Index> want(static_cast<std::size_t>(k), n / k);
  for (Index r = 0; r < n % k; ++r) ++want[static_cast<std::size_t>(r)];
  Index deficit = 0;
  for (int c = 0; c < k; ++c) {
    const Index avail = static_cast<Index>(by_class[static_cast<std::size_t>(c)].size());
    if (want[static_cast<std::size_t>(c)] > avail) {
      deficit += want[static_cast<std::size_t>(c)] - avail;
      want[static_cast<std::size_t>(c)] = avail;
    }
  }
  for (int c = 0; c < k && deficit > 0; ++c) {
    const Index avail = static_cast<Index>(by_class[static_cast<std::size_t>(c)].size());
    const Index extra = std::min(deficit, avail - want[static_cast<std::size_t>(c)]);
    want[static_cast<std::size_t>(c)] += extra;
    deficit -= extra;
  }
  check(deficit == 0, "stratified subset could not place every sample");

  RngStream rng = RngStream::root(seed).fork(StreamTag::Data);
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < k; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    RngStream cs = rng.fork(static_cast<std::uint64_t>(c));
    for (Index i = static_cast<Index>(idx.size()) - 1; i > 0; --i) {
      const Index j = static_cast<Index>(cs.bits_at(static_cast<std::uint64_t>(i)) %
                                         static_cast<std::uint64_t>(i + 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    rows.insert(rows.end(), idx.begin(), idx.begin() + want[static_cast<std::size_t>(c)]);
  }
  std::sort(rows.begin(), rows.end());
  Dataset out = take_rows(ds.images, ds.labels, rows, ds.split, ds.num_classes);
  return out;
}

// ---------------------------------------------------------------------------
// Procedural corpora (real on-disk formats)
// ---------------------------------------------------------------------------

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24),
                             static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// 8x8 glyph masks for the ten classes.
const std::array<std::array<const char*, 8>, 10> kGlyphs = {{
    {".######.", "##....##", "##....##", "##....##", "##....##", "##....##", "##....##",
     ".######."},
    {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...",
     ".######."},
    {".######.", "##....##", "......##", ".....##.", "...###..", "..##....", ".##.....",
     "########"},
    {".######.", "......##", "......##", "..#####.", "......##", "......##", "##....##",
     ".######."},
    {"....###.", "...####.", "..##.##.", ".##..##.", "########", ".....##.", ".....##.",
     ".....##."},
    {"########", "##......", "##......", "#######.", "......##", "......##", "##....##",
     ".######."},
    {".######.", "##......", "##......", "#######.", "##....##", "##....##", "##....##",
     ".######."},
    {"########", "......##", ".....##.", "....##..", "...##...", "..##....", "..##....",
     "..##...."},
    {".######.", "##....##", "##....##", ".######.", "##....##", "##....##", "##....##",
     ".######."},
    {".######.", "##....##", "##....##", ".#######", "......##", "......##", "......##",
     ".######."},
}};

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v)));
}

/// One 28x28 digit-style image: glyph upscaled x3 to 24x24, jittered by up to
/// +-2 px, intensity-scaled, on a noisy background.
void render_digit(int cls, RngStream rng, std::uint8_t* out) {
  const double gain = 0.65 + 0.35 * rng.uniform_at(0);
  const int off_y = static_cast<int>(rng.bits_at(1) % 5);  // 0..4 (24 + 4 = 28)
  const int off_x = static_cast<int>(rng.bits_at(2) % 5);
  const RngStream pix = rng.fork(3);
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      double v = 0.0;
      const int gy = y - off_y, gx = x - off_x;
      if (gy >= 0 && gy < 24 && gx >= 0 && gx < 24 &&
          kGlyphs[static_cast<std::size_t>(cls)][static_cast<std::size_t>(gy / 3)][gx / 3] == '#')
        v = 255.0 * gain;
      v += 24.0 * pix.normal_at(static_cast<std::uint64_t>(y * 28 + x));
      out[y * 28 + x] = clamp_byte(v);
    }
  }
}

/// One 32x32x3 texture image: class-specific oriented sinusoid with a
/// class-specific color profile, random phase and heavy pixel noise.
void render_texture(int cls, RngStream rng, std::uint8_t* out) {
  const double theta = std::numbers::pi * cls / 10.0 + 0.06 * (rng.uniform_at(0) - 0.5);
  const double freq = 2.0 + static_cast<double>(cls % 4);
  const double phase = 2.0 * std::numbers::pi * rng.uniform_at(1);
  const double gain = 70.0 + 40.0 * rng.uniform_at(2);
  const double cw[3] = {0.55 + 0.45 * std::cos(2.0 * std::numbers::pi * cls / 10.0),
                        0.55 + 0.45 * std::cos(2.0 * std::numbers::pi * cls / 10.0 + 2.1),
                        0.55 + 0.45 * std::cos(2.0 * std::numbers::pi * cls / 10.0 + 4.2)};
  const double ct = std::cos(theta), st = std::sin(theta);
  const RngStream pix = rng.fork(3);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        const double u = (x * ct + y * st) / 32.0;
        double v = 128.0 + gain * cw[c] * std::sin(2.0 * std::numbers::pi * freq * u + phase);
        v += 25.0 * pix.normal_at(static_cast<std::uint64_t>((c * 32 + y) * 32 + x));
        out[(c * 32 + y) * 32 + x] = clamp_byte(v);
      }
    }
  }
}

std::vector<int> shuffled_balanced_labels(Index n, RngStream rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 10);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.bits_at(static_cast<std::uint64_t>(i)) %
                                       static_cast<std::uint64_t>(i + 1));
    std::swap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]);
  }
  return labels;
}

}  // namespace

void write_synthetic_idx_corpus(const std::string& dir, Index n_train, Index n_test,
                                std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  RngStream rng = RngStream::root(seed).fork(StreamTag::Synth);
  auto write_pair = [&](const std::string& images_path, const std::string& labels_path, Index n,
                        std::uint64_t tag) {
    const std::vector<int> labels = shuffled_balanced_labels(n, rng.fork(tag).fork(0));
    std::ofstream imgs(images_path, std::ios::binary);
    check(imgs.good(), "cannot write ", images_path);
    write_be32(imgs, 0x00000803u);
    write_be32(imgs, static_cast<std::uint32_t>(n));
    write_be32(imgs, 28);
    write_be32(imgs, 28);
    std::vector<std::uint8_t> img(28 * 28);
    for (Index i = 0; i < n; ++i) {
      render_digit(labels[static_cast<std::size_t>(i)],
                   rng.fork(tag).fork(1 + static_cast<std::uint64_t>(i)), img.data());
      imgs.write(reinterpret_cast<const char*>(img.data()), 28 * 28);
    }
    std::ofstream lab(labels_path, std::ios::binary);
    check(lab.good(), "cannot write ", labels_path);
    write_be32(lab, 0x00000801u);
    write_be32(lab, static_cast<std::uint32_t>(n));
    for (Index i = 0; i < n; ++i) {
      const std::uint8_t b = static_cast<std::uint8_t>(labels[static_cast<std::size_t>(i)]);
      lab.write(reinterpret_cast<const char*>(&b), 1);
    }
  };
  write_pair(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte", n_train, 10);
  write_pair(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", n_test, 20);
}

void write_synthetic_cifar_corpus(const std::string& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  RngStream rng = RngStream::root(seed).fork(StreamTag::Synth).fork(99);
  constexpr Index kPerBatch = 10000;
  std::vector<std::uint8_t> rec(3073);
  for (int b = 0; b < 6; ++b) {
    const std::string path =
        b < 5 ? dir + "/data_batch_" + std::to_string(b + 1) + ".bin" : dir + "/test_batch.bin";
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot write ", path);
    const std::vector<int> labels =
        shuffled_balanced_labels(kPerBatch, rng.fork(static_cast<std::uint64_t>(b)).fork(0));
    for (Index i = 0; i < kPerBatch; ++i) {
      rec[0] = static_cast<std::uint8_t>(labels[static_cast<std::size_t>(i)]);
      render_texture(labels[static_cast<std::size_t>(i)],
                     rng.fork(static_cast<std::uint64_t>(b)).fork(1 + static_cast<std::uint64_t>(i)),
                     rec.data() + 1);
      out.write(reinterpret_cast<const char*>(rec.data()), 3073);
    }
  }
}

}  // namespace noiselab
