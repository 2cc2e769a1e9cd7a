#include "igc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "igc/error.hpp"

namespace igc {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr long long kRecordBytes = 1 + kCifarChannels * kCifarDim * kCifarDim;

void read_cifar_file(const std::string& file, std::vector<std::uint8_t>& raw,
                     std::vector<int>& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ingest_error("cannot open " + file);
  in.seekg(0, std::ios::end);
  const long long bytes = in.tellg();
  in.seekg(0);
  if (bytes % kRecordBytes != 0)
    throw ingest_error("malformed CIFAR record length in " + file,
                       bytes - bytes % kRecordBytes);
  std::vector<std::uint8_t> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), bytes);
  if (!in) throw ingest_error("short read from " + file, in.tellg());
  for (long long off = 0; off < bytes; off += kRecordBytes) {
    labels.push_back(buf[off]);
    raw.insert(raw.end(), buf.begin() + off + 1, buf.begin() + off + kRecordBytes);
  }
}

void normalize(Dataset& d) {
  const int c_count = d.images.c;
  d.channel_mean.assign(c_count, 0.0);
  d.channel_std.assign(c_count, 0.0);
  const double per_channel = double(d.images.n) * d.images.h * d.images.w;
  for (int c = 0; c < c_count; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < d.images.n; ++n)
      for (int i = 0; i < d.images.h; ++i)
        for (int j = 0; j < d.images.w; ++j) {
          double v = d.images.at(n, c, i, j);
          sum += v;
          sq += v * v;
        }
    const double mean = sum / per_channel;
    const double var = std::max(sq / per_channel - mean * mean, 1e-12);
    d.channel_mean[c] = mean;
    d.channel_std[c] = std::sqrt(var);
    for (int n = 0; n < d.images.n; ++n)
      for (int i = 0; i < d.images.h; ++i)
        for (int j = 0; j < d.images.w; ++j)
          d.images.at(n, c, i, j) = (d.images.at(n, c, i, j) - mean) / d.channel_std[c];
  }
}

}  // namespace

Dataset load_cifar10(const std::string& path) {
  std::vector<std::string> files;
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    for (int i = 1; i <= 5; ++i) {
      std::string f = (fs::path(path) / ("data_batch_" + std::to_string(i) + ".bin")).string();
      if (fs::exists(f)) files.push_back(f);
    }
    if (files.empty()) throw ingest_error("no data_batch_*.bin files under " + path);
  } else {
    files.push_back(path);
  }

  std::vector<std::uint8_t> raw;
  std::vector<int> labels;
  for (const auto& f : files) read_cifar_file(f, raw, labels);

  Dataset d;
  d.classes = 10;
  d.labels = std::move(labels);
  d.images = FeatureMap(static_cast<int>(d.labels.size()), kCifarChannels, kCifarDim, kCifarDim);
  for (std::size_t i = 0; i < raw.size(); ++i) d.images.v[i] = double(raw[i]);
  normalize(d);
  return d;
}

Dataset subset(const Dataset& data, const std::vector<int>& keep_labels, int per_class) {
  std::vector<int> relabel(data.classes, -1);
  for (std::size_t k = 0; k < keep_labels.size(); ++k) relabel[keep_labels[k]] = int(k);
  std::vector<int> indices;
  std::vector<int> taken(keep_labels.size(), 0);
  for (int n = 0; n < data.size(); ++n) {
    int r = relabel[data.labels[n]];
    if (r < 0) continue;
    if (per_class > 0 && taken[r] >= per_class) continue;
    ++taken[r];
    indices.push_back(n);
  }
  if (indices.empty()) throw usage_error("subset: no images match the requested labels");
  Dataset out;
  out.classes = static_cast<int>(keep_labels.size());
  out.channel_mean = data.channel_mean;
  out.channel_std = data.channel_std;
  out.augment = data.augment;
  out.images = FeatureMap(static_cast<int>(indices.size()), data.images.c, data.images.h,
                          data.images.w);
  const std::size_t image_size =
      static_cast<std::size_t>(data.images.c) * data.images.h * data.images.w;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    std::copy_n(data.images.v.data() + indices[k] * image_size, image_size,
                out.images.v.data() + k * image_size);
    out.labels.push_back(relabel[data.labels[indices[k]]]);
  }
  return out;
}

FeatureMap augment(const FeatureMap& image, std::mt19937_64& rng) {
  if (image.n != 1) throw usage_error("augment: expects a single image");
  const int pad = 4;
  std::uniform_int_distribution<int> offset(0, 2 * pad);
  const int dy = offset(rng), dx = offset(rng);
  const bool mirror = (rng() & 1u) != 0;
  FeatureMap out(1, image.c, image.h, image.w);
  for (int c = 0; c < image.c; ++c)
    for (int i = 0; i < image.h; ++i)
      for (int j = 0; j < image.w; ++j) {
        const int src_i = i + dy - pad;
        int src_j = j + dx - pad;
        if (mirror && src_j >= 0 && src_j < image.w) src_j = image.w - 1 - src_j;
        out.at(0, c, i, j) = (src_i < 0 || src_i >= image.h || src_j < 0 || src_j >= image.w)
                                 ? 0.0
                                 : image.at(0, c, src_i, src_j);
      }
  return out;
}

Dataset synth_dataset(int classes, int count, std::uint64_t seed, int channels, int height,
                      int width) {
  if (classes < 2 || count < classes) throw usage_error("synth_dataset: need count >= classes >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Unit-norm mean pattern per class; margin far above the noise scale.
  const std::size_t dim = static_cast<std::size_t>(channels) * height * width;
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
  for (auto& mu : means) {
    double norm = 0.0;
    for (double& v : mu) {
      v = gauss(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : mu) v /= norm;
  }

  const double margin = 2.0, noise = 0.3;
  Dataset d;
  d.classes = classes;
  d.images = FeatureMap(count, channels, height, width);
  for (int n = 0; n < count; ++n) {
    const int label = n % classes;  // balanced by construction
    d.labels.push_back(label);
    for (std::size_t i = 0; i < dim; ++i)
      d.images.v[n * dim + i] = margin * means[label][i] + noise * gauss(rng);
  }
  d.channel_mean.assign(channels, 0.0);
  d.channel_std.assign(channels, 1.0);
  return d;
}

}  // namespace igc
