#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "igc/data.hpp"
#include "igc/error.hpp"

using namespace igc;

namespace {

// Writes n synthetic CIFAR-style records (label byte + 3072 pixel bytes).
void write_cifar_file(const std::string& path, int n, int extra_bytes = 0) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (int i = 0; i < n; ++i) {
    unsigned char label = static_cast<unsigned char>(i % 10);
    out.put(static_cast<char>(label));
    for (int b = 0; b < 3072; ++b)
      out.put(static_cast<char>((i * 37 + b * 11 + label) % 256));
  }
  for (int b = 0; b < extra_bytes; ++b) out.put('\0');
}

}  // namespace

TEST_CASE("load_cifar10 reads 3073-byte records") {
  // a stock batch file (30,730,000 bytes) holds exactly 10000 records
  CHECK(30730000 % 3073 == 0);
  CHECK(30730000 / 3073 == 10000);

  const std::string path = "test_batch_small.bin";
  write_cifar_file(path, 25);
  Dataset d = load_cifar10(path);
  CHECK(d.size() == 25);
  CHECK(d.images.c == 3);
  CHECK(d.images.h == 32);
  CHECK(d.images.w == 32);
  for (int i = 0; i < 25; ++i) CHECK(d.labels[i] == i % 10);

  // channel statistics removed by normalization
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    const double count = 25.0 * 32 * 32;
    for (int n = 0; n < 25; ++n)
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
          sum += d.images.at(n, c, i, j);
          sq += d.images.at(n, c, i, j) * d.images.at(n, c, i, j);
        }
    CHECK(sum / count == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sq / count == doctest::Approx(1.0).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("malformed record length reports the offset") {
  const std::string path = "test_batch_bad.bin";
  write_cifar_file(path, 3, 100);  // trailing partial record
  try {
    load_cifar10(path);
    FAIL("expected ingest_error");
  } catch (const ingest_error& e) {
    CHECK(e.offset == 3 * 3073);
  }
  std::remove(path.c_str());
}

TEST_CASE("subset filters and relabels") {
  const std::string path = "test_batch_subset.bin";
  write_cifar_file(path, 40);
  Dataset d = load_cifar10(path);
  Dataset pair = subset(d, {3, 7}, 2);
  CHECK(pair.classes == 2);
  CHECK(pair.size() == 4);
  for (int label : pair.labels) CHECK((label == 0 || label == 1));
  std::remove(path.c_str());
}

TEST_CASE("augment is reproducible and stays in the padded window") {
  FeatureMap image(1, 3, 32, 32);
  for (std::size_t i = 0; i < image.v.size(); ++i) image.v[i] = double(i % 97) / 97.0;

  std::mt19937_64 rng1(42), rng2(42);
  FeatureMap a = augment(image, rng1);
  FeatureMap b = augment(image, rng2);
  CHECK(a.v == b.v);

  // a different seed draws a different crop at least once over a few tries
  std::mt19937_64 rng3(43);
  bool any_different = false;
  for (int t = 0; t < 5 && !any_different; ++t) any_different = augment(image, rng3).v != a.v;
  CHECK(any_different);
}

TEST_CASE("synthetic dataset is balanced and normalized") {
  Dataset d = synth_dataset(2, 2000, 7);
  CHECK(d.size() == 2000);
  int counts[2] = {0, 0};
  for (int label : d.labels) ++counts[label];
  CHECK(counts[0] == 1000);
  CHECK(counts[1] == 1000);

  Dataset again = synth_dataset(2, 2000, 7);
  CHECK(d.images.v == again.images.v);  // seeded determinism

  Dataset three = synth_dataset(3, 30, 9, 1, 4, 4);
  CHECK(three.classes == 3);
  CHECK(three.images.c == 1);

  CHECK_THROWS_AS(synth_dataset(1, 10, 1), usage_error);
}
