#include "hkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hkd/rng.hpp"

namespace fs = std::filesystem;

namespace hkd::data {

namespace {

// Smooth random field: a coarse grid of normal draws upsampled bilinearly.
// Low-frequency structure gives convnets something spatial to latch onto.
Mat random_field(int channels, int h, int w, double amplitude, RngStream& rng) {
  const int grid = 4;
  Mat field(1, channels * h * w);
  for (int c = 0; c < channels; ++c) {
    Mat coarse(grid, grid);
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) coarse(i, j) = rng.normal();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double gy = (grid - 1) * static_cast<double>(y) / std::max(1, h - 1);
        double gx = (grid - 1) * static_cast<double>(x) / std::max(1, w - 1);
        int y0 = std::min(grid - 2, static_cast<int>(gy));
        int x0 = std::min(grid - 2, static_cast<int>(gx));
        double fy = gy - y0, fx = gx - x0;
        double v = coarse(y0, x0) * (1 - fy) * (1 - fx) +
                   coarse(y0 + 1, x0) * fy * (1 - fx) +
                   coarse(y0, x0 + 1) * (1 - fy) * fx +
                   coarse(y0 + 1, x0 + 1) * fy * fx;
        field(0, (c * h + y) * w + x) = amplitude * v;
      }
  }
  return field;
}

void compute_or_apply_stats(const DatasetSpec& spec, Dataset& train,
                            Dataset& test) {
  const int c = train.shape.c;
  const int plane = train.shape.h * train.shape.w;
  std::vector<double> mean(c, 0.0), stddev(c, 1.0);

  if (spec.channel_mean && spec.channel_stddev) {
    require(static_cast<int>(spec.channel_mean->size()) == c &&
                static_cast<int>(spec.channel_stddev->size()) == c,
            "dataset: normalization stats must have one entry per channel");
    mean = *spec.channel_mean;
    stddev = *spec.channel_stddev;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      auto block = train.images.middleCols(static_cast<Eigen::Index>(ch) * plane,
                                           plane);
      mean[ch] = block.mean();
      double var = (block.array() - mean[ch]).square().mean();
      stddev[ch] = std::sqrt(std::max(var, 1e-12));
    }
  }

  for (Dataset* ds : {&train, &test}) {
    ds->channel_mean = mean;
    ds->channel_stddev = stddev;
    if (!spec.normalize) continue;
    for (int ch = 0; ch < c; ++ch) {
      auto block =
          ds->images.middleCols(static_cast<Eigen::Index>(ch) * plane, plane);
      block = (block.array() - mean[ch]) / stddev[ch];
    }
  }
}

void shuffle_in_place(Dataset& ds, RngStream& rng) {
  std::vector<int> order(ds.size());
  for (int i = 0; i < ds.size(); ++i) order[i] = i;
  rng.shuffle(order);
  Mat images(ds.images.rows(), ds.images.cols());
  std::vector<int> labels(ds.labels.size());
  for (int i = 0; i < ds.size(); ++i) {
    images.row(i) = ds.images.row(order[i]);
    labels[i] = ds.labels[order[i]];
  }
  ds.images = std::move(images);
  ds.labels = std::move(labels);
}

SplitPair load_synthetic(const DatasetSpec& spec, uint64_t seed) {
  require(spec.num_classes >= 2, "synthetic-clusters: need at least 2 classes");
  require(spec.train_per_class >= 1 && spec.test_per_class >= 1,
          "synthetic-clusters: need positive per-class counts");
  const int dim = spec.channels * spec.image_size * spec.image_size;

  RngStream template_rng(substream_seed(seed, "data.templates"));
  RngStream noise_rng(substream_seed(seed, "data.noise"));

  // Sibling structure: classes 2s and 2s+1 share a base pattern and are told
  // apart only by a low-amplitude class pattern.
  std::vector<Mat> templates;
  Mat base;
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    if (cls % 2 == 0)
      base = random_field(spec.channels, spec.image_size, spec.image_size, 1.0,
                          template_rng);
    Mat delta = random_field(spec.channels, spec.image_size, spec.image_size,
                             spec.pattern_delta, template_rng);
    templates.push_back(base + delta);
  }

  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.num_classes; ++a)
    for (int b = a + 1; b < spec.num_classes; ++b)
      min_dist = std::min(min_dist, (templates[a] - templates[b]).norm());
  // Strictly inside half the margin: samples of different classes can never
  // be closer to the wrong template, hence linear separability.
  const double noise_cap = 0.45 * min_dist;

  // Nuisance directions live orthogonal to every template difference, so the
  // margin argument above is untouched no matter how large the amplitude.
  std::vector<Mat> nuisance;
  if (spec.nuisance_dims > 0) {
    std::vector<Mat> span;  // orthonormal basis of {T_c - T_0}
    for (int cls = 1; cls < spec.num_classes; ++cls) {
      Mat v = templates[cls] - templates[0];
      for (const Mat& b : span) v -= (v.row(0).dot(b.row(0))) * b;
      double n = v.norm();
      if (n > 1e-9) span.push_back(v / n);
    }
    while (static_cast<int>(nuisance.size()) < spec.nuisance_dims) {
      // Smooth fields, same spectral family as the class patterns, so the
      // nuisance is not trivially filtered out by pooling.
      Mat v = random_field(spec.channels, spec.image_size, spec.image_size,
                           1.0, template_rng);
      for (const Mat& b : span) v -= (v.row(0).dot(b.row(0))) * b;
      for (const Mat& b : nuisance) v -= (v.row(0).dot(b.row(0))) * b;
      double n = v.norm();
      if (n > 1e-6) nuisance.push_back(v / n);
    }
  }

  auto draw_split = [&](int per_class) {
    Dataset ds;
    ds.shape = nn::Shape{spec.channels, spec.image_size, spec.image_size};
    ds.num_classes = spec.num_classes;
    ds.images = Mat(per_class * spec.num_classes, dim);
    ds.labels.resize(per_class * spec.num_classes);
    int row = 0;
    for (int cls = 0; cls < spec.num_classes; ++cls) {
      for (int s = 0; s < per_class; ++s, ++row) {
        Mat noise(1, dim);
        for (int j = 0; j < dim; ++j) noise(0, j) = spec.noise_sigma *
                                                    noise_rng.normal();
        double n = noise.norm();
        if (n > noise_cap) noise *= noise_cap / n;
        ds.images.row(row) = templates[cls] + noise;
        for (const Mat& dir : nuisance)
          ds.images.row(row) += spec.nuisance_amp * noise_rng.normal() * dir;
        ds.labels[row] = cls;
      }
    }
    return ds;
  };

  SplitPair pair;
  pair.train = draw_split(spec.train_per_class);
  pair.test = draw_split(spec.test_per_class);
  return pair;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// CIFAR binary records: [label | 3072 bytes] (cifar10) or
// [coarse | fine | 3072 bytes] (cifar100). Pixels are R-plane, G-plane,
// B-plane, matching our channel-major layout directly.
void append_cifar_file(const std::string& path, bool cifar100, int num_classes,
                       int cap_per_class, std::vector<int>& class_counts,
                       std::vector<std::pair<int, std::vector<unsigned char>>>& out) {
  auto bytes = read_file_bytes(path);
  const size_t rec = cifar100 ? 3074 : 3073;
  if (bytes.size() % rec != 0)
    throw DataError("cifar file has unexpected size: " + path);
  for (size_t off = 0; off < bytes.size(); off += rec) {
    int label = cifar100 ? bytes[off + 1] : bytes[off];
    if (label >= num_classes) continue;
    if (class_counts[label] >= cap_per_class) continue;
    ++class_counts[label];
    const unsigned char* px = bytes.data() + off + (cifar100 ? 2 : 1);
    out.emplace_back(label, std::vector<unsigned char>(px, px + 3072));
  }
}

Dataset cifar_to_dataset(const DatasetSpec& spec,
                         std::vector<std::pair<int, std::vector<unsigned char>>>& raw) {
  Dataset ds;
  ds.num_classes = spec.num_classes;
  Mat native(static_cast<Eigen::Index>(raw.size()), 3 * 32 * 32);
  ds.labels.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    ds.labels[i] = raw[i].first;
    for (int j = 0; j < 3072; ++j)
      native(static_cast<Eigen::Index>(i), j) = raw[i].second[j] / 255.0;
  }
  require(spec.channels == 3, "cifar-like-subset: channels must be 3");
  if (spec.image_size != 32)
    ds.images = resize_bilinear(native, nn::Shape{3, 32, 32}, spec.image_size,
                                spec.image_size);
  else
    ds.images = std::move(native);
  ds.shape = nn::Shape{3, spec.image_size, spec.image_size};
  return ds;
}

SplitPair load_cifar_subset(const DatasetSpec& spec) {
  if (!fs::is_directory(spec.source_dir))
    throw DataError("cifar-like-subset: source_dir not found: " +
                    spec.source_dir);
  bool cifar100 = spec.source_format == "cifar100";
  if (!cifar100 && spec.source_format != "cifar10")
    throw DataError("cifar-like-subset: source_format must be cifar10 or cifar100");

  std::vector<std::string> train_files, test_files;
  for (const auto& e : fs::directory_iterator(spec.source_dir)) {
    std::string name = e.path().filename().string();
    if (e.path().extension() != ".bin") continue;
    if (name.find("test") != std::string::npos)
      test_files.push_back(e.path().string());
    else
      train_files.push_back(e.path().string());
  }
  std::sort(train_files.begin(), train_files.end());
  std::sort(test_files.begin(), test_files.end());
  if (train_files.empty())
    throw DataError("cifar-like-subset: no training .bin files in " +
                    spec.source_dir);

  std::vector<std::pair<int, std::vector<unsigned char>>> train_raw, test_raw;
  std::vector<int> train_counts(spec.num_classes, 0),
      test_counts(spec.num_classes, 0);
  for (const auto& f : train_files)
    append_cifar_file(f, cifar100, spec.num_classes, spec.train_per_class,
                      train_counts, train_raw);
  for (const auto& f : test_files)
    append_cifar_file(f, cifar100, spec.num_classes, spec.test_per_class,
                      test_counts, test_raw);

  SplitPair pair;
  pair.train = cifar_to_dataset(spec, train_raw);
  pair.test = cifar_to_dataset(spec, test_raw);
  return pair;
}

Dataset load_class_dirs(const DatasetSpec& spec, const fs::path& root) {
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw DataError("custom-dir: no class subdirectories in " + root.string());

  Dataset ds;
  ds.num_classes = static_cast<int>(class_dirs.size());
  ds.shape = nn::Shape{spec.channels, spec.image_size, spec.image_size};
  std::vector<Mat> rows;
  for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[cls])) {
      auto ext = e.path().extension();
      if (ext == ".ppm" || ext == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      nn::Shape shp;
      Mat img = read_pnm(f.string(), shp);
      require(shp.c == spec.channels,
              "custom-dir: channel mismatch in " + f.string());
      if (shp.h != spec.image_size || shp.w != spec.image_size)
        img = resize_bilinear(img, shp, spec.image_size, spec.image_size);
      rows.push_back(img);
      ds.labels.push_back(static_cast<int>(cls));
    }
  }
  if (rows.empty()) throw DataError("custom-dir: no images under " + root.string());
  ds.images = Mat(static_cast<Eigen::Index>(rows.size()), ds.shape.size());
  for (size_t i = 0; i < rows.size(); ++i)
    ds.images.row(static_cast<Eigen::Index>(i)) = rows[i];
  return ds;
}

SplitPair load_custom_dir(const DatasetSpec& spec) {
  fs::path root(spec.source_dir);
  if (!fs::is_directory(root / "train") || !fs::is_directory(root / "test"))
    throw DataError("custom-dir: expected train/ and test/ under " +
                    spec.source_dir);
  SplitPair pair;
  pair.train = load_class_dirs(spec, root / "train");
  pair.test = load_class_dirs(spec, root / "test");
  require(pair.train.num_classes == pair.test.num_classes,
          "custom-dir: train/test class mismatch");
  return pair;
}

}  // namespace

SplitPair load_dataset(const DatasetSpec& spec, uint64_t seed) {
  SplitPair pair;
  if (spec.name == "synthetic-clusters") {
    pair = load_synthetic(spec, seed);
  } else if (spec.name == "cifar-like-subset") {
    pair = load_cifar_subset(spec);
  } else if (spec.name == "custom-dir") {
    pair = load_custom_dir(spec);
  } else {
    throw ConfigError("unknown dataset: " + spec.name);
  }

  for (const Dataset* ds : {&pair.train, &pair.test})
    for (int label : ds->labels)
      if (label < 0 || label >= ds->num_classes)
        throw DataError("dataset: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(ds->num_classes) + ")");

  RngStream shuffle_rng(substream_seed(seed, "data.shuffle"));
  shuffle_in_place(pair.train, shuffle_rng);
  shuffle_in_place(pair.test, shuffle_rng);
  compute_or_apply_stats(spec, pair.train, pair.test);
  return pair;
}

FeatureDataset extract_features(models::Backbone& net, const Dataset& ds,
                                int batch_size) {
  FeatureDataset out;
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  out.features = Mat(ds.size(), net.feature_dim());
  for (int start = 0; start < ds.size(); start += batch_size) {
    int n = std::min(batch_size, ds.size() - start);
    auto res = net.forward(ds.images.middleRows(start, n), false);
    out.features.middleRows(start, n) = res.features;
  }
  return out;
}

TransferSplit make_transfer_split(models::Backbone& frozen_net,
                                  const DatasetSpec& target_spec,
                                  uint64_t seed) {
  DatasetSpec spec = target_spec;
  nn::Shape want = frozen_net.input_shape();
  require(spec.channels == want.c,
          "transfer: target channel count must match the frozen network");
  spec.image_size = want.h;  // resize target images to the source input size
  SplitPair pair = load_dataset(spec, seed);
  TransferSplit split;
  split.train = extract_features(frozen_net, pair.train);
  split.test = extract_features(frozen_net, pair.test);
  return split;
}

Mat resize_bilinear(const Mat& images, nn::Shape from, int to_h, int to_w) {
  require(images.cols() == from.size(), "resize: input width mismatch");
  Mat out(images.rows(), from.c * to_h * to_w);
  for (Eigen::Index s = 0; s < images.rows(); ++s) {
    for (int c = 0; c < from.c; ++c) {
      const double* src =
          images.row(s).data() + static_cast<size_t>(c) * from.h * from.w;
      double* dst =
          out.row(s).data() + static_cast<size_t>(c) * to_h * to_w;
      for (int y = 0; y < to_h; ++y)
        for (int x = 0; x < to_w; ++x) {
          double sy = to_h > 1 ? (from.h - 1) * static_cast<double>(y) / (to_h - 1)
                               : 0.0;
          double sx = to_w > 1 ? (from.w - 1) * static_cast<double>(x) / (to_w - 1)
                               : 0.0;
          int y0 = std::min(from.h - 2, static_cast<int>(sy));
          int x0 = std::min(from.w - 2, static_cast<int>(sx));
          if (from.h == 1) y0 = 0;
          if (from.w == 1) x0 = 0;
          double fy = sy - y0, fx = sx - x0;
          int y1 = std::min(from.h - 1, y0 + 1);
          int x1 = std::min(from.w - 1, x0 + 1);
          dst[y * to_w + x] = src[y0 * from.w + x0] * (1 - fy) * (1 - fx) +
                              src[y1 * from.w + x0] * fy * (1 - fx) +
                              src[y0 * from.w + x1] * (1 - fy) * fx +
                              src[y1 * from.w + x1] * fy * fx;
        }
    }
  }
  return out;
}

Mat read_pnm(const std::string& path, nn::Shape& shape_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6" && magic != "P5")
    throw DataError("unsupported image format (want binary PPM/PGM): " + path);
  int channels = magic == "P6" ? 3 : 1;

  auto next_int = [&]() {
    int v;
    // skip whitespace and '#' comment lines
    while (true) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    f >> v;
    if (!f) throw DataError("malformed PNM header: " + path);
    return v;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval <= 0 || maxval > 255)
    throw DataError("PNM maxval must be in [1, 255]: " + path);
  f.get();  // single whitespace before raster

  std::vector<unsigned char> raster(static_cast<size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(raster.data()),
         static_cast<std::streamsize>(raster.size()));
  if (!f) throw DataError("truncated PNM raster: " + path);

  shape_out = nn::Shape{channels, h, w};
  Mat img(1, channels * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img(0, (c * h + y) * w + x) =
            raster[(static_cast<size_t>(y) * w + x) * channels + c] /
            static_cast<double>(maxval);
  return img;
}

}  // namespace hkd::data
