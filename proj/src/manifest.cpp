#include "igc/manifest.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "manifest files are little-endian; big-endian hosts are unsupported");

namespace igc {

using nlohmann::json;

namespace {

void write_doubles(std::ofstream& out, const std::vector<double>& v, bool as_float32) {
  if (as_float32) {
    std::vector<float> f(v.begin(), v.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t count, bool float32,
                                 const std::string& path) {
  std::vector<double> v(count);
  if (float32) {
    std::vector<float> f(count);
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    std::copy(f.begin(), f.end(), v.begin());
  } else {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  }
  if (!in) throw ingest_error("truncated payload in " + path, in.tellg());
  return v;
}

json read_header_line(std::ifstream& in, const std::string& path, const std::string& format) {
  std::string line;
  if (!std::getline(in, line)) throw ingest_error("missing header line in " + path, 0);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ingest_error("bad header in " + path + ": " + e.what(), 0);
  }
  if (header.value("format", "") != format)
    throw ingest_error("not a " + format + " file: " + path, 0);
  return header;
}

}  // namespace

void write_kernel_manifest(const std::string& path, const KernelManifest& manifest,
                           bool as_float32) {
  manifest.chain.validate();
  if (manifest.weights.factors.size() != manifest.chain.factors.size())
    throw structural_error("manifest: weight set does not match the chain");
  json header;
  header["format"] = "igc-kernel";
  header["version"] = 1;
  header["dtype"] = as_float32 ? "f32" : "f64";
  header["chain"] = json::parse(chain_to_json(manifest.chain));
  json counts = json::array(), affine = json::array();
  for (std::size_t l = 0; l < manifest.chain.factors.size(); ++l) {
    const auto& spec = manifest.chain.factors[l];
    const auto& fw = manifest.weights.factors[l];
    if (fw.w.size() != factor_weight_count(spec))
      throw structural_error("manifest: factor weight count mismatch");
    counts.push_back(fw.w.size());
    affine.push_back(fw.affine.has_value());
  }
  header["counts"] = std::move(counts);
  header["affine"] = std::move(affine);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ingest_error("cannot open " + path + " for writing");
  out << header.dump() << '\n';
  for (std::size_t l = 0; l < manifest.weights.factors.size(); ++l) {
    const auto& fw = manifest.weights.factors[l];
    write_doubles(out, fw.w, as_float32);
    if (fw.affine) {
      write_doubles(out, fw.affine->scale, as_float32);
      write_doubles(out, fw.affine->shift, as_float32);
    }
  }
  if (!out) throw ingest_error("write failed for " + path);
}

KernelManifest read_kernel_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ingest_error("cannot open " + path);
  json header = read_header_line(in, path, "igc-kernel");
  KernelManifest m;
  bool float32;
  try {
    m.chain = chain_from_json(header.at("chain").dump());
    float32 = header.at("dtype").get<std::string>() == "f32";
  } catch (const json::exception& e) {
    throw ingest_error("bad header in " + path + ": " + e.what(), 0);
  }
  auto counts = header.value("counts", std::vector<std::size_t>{});
  auto affine = header.value("affine", std::vector<bool>{});
  for (std::size_t l = 0; l < m.chain.factors.size(); ++l) {
    const auto& spec = m.chain.factors[l];
    std::size_t expect = factor_weight_count(spec);
    if (l < counts.size() && counts[l] != expect)
      throw ingest_error("factor weight count mismatch in " + path, in.tellg());
    FactorWeights fw;
    fw.w = read_doubles(in, expect, float32, path);
    if (l < affine.size() && affine[l]) {
      AffineParams a;
      a.scale = read_doubles(in, spec.channels_out, float32, path);
      a.shift = read_doubles(in, spec.channels_out, float32, path);
      fw.affine = std::move(a);
    }
    m.weights.factors.push_back(std::move(fw));
  }
  return m;
}

KernelManifest dense_kernel_manifest(const DenseKernel& kernel) {
  KernelManifest m;
  GroupConvSpec spec = GroupConvSpec::grouped(kernel.channels_in, kernel.channels_out,
                                              kernel.channels_in, kernel.channels_out,
                                              kernel.taps);
  m.chain.factors.push_back(spec);
  FactorWeights fw;
  fw.w = kernel.w;  // same (out, in, tap) row-major layout
  m.weights.factors.push_back(std::move(fw));
  return m;
}

DenseKernel dense_kernel_from_manifest(const KernelManifest& manifest) {
  if (manifest.chain.depth() != 1 || manifest.chain.factors[0].branches != 1)
    throw structural_error("manifest does not hold a dense single-factor kernel");
  const auto& spec = manifest.chain.factors[0];
  DenseKernel kernel(spec.channels_out, spec.channels_in, spec.spatial_taps);
  kernel.w = manifest.weights.factors[0].w;
  return kernel;
}

void write_feature_map(const std::string& path, const FeatureMap& map, bool as_float32) {
  json header;
  header["format"] = "igc-tensor";
  header["version"] = 1;
  header["dtype"] = as_float32 ? "f32" : "f64";
  header["shape"] = {map.n, map.c, map.h, map.w};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ingest_error("cannot open " + path + " for writing");
  out << header.dump() << '\n';
  write_doubles(out, map.v, as_float32);
  if (!out) throw ingest_error("write failed for " + path);
}

FeatureMap read_feature_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ingest_error("cannot open " + path);
  json header = read_header_line(in, path, "igc-tensor");
  std::vector<int> shape;
  bool float32;
  try {
    shape = header.at("shape").get<std::vector<int>>();
    float32 = header.at("dtype").get<std::string>() == "f32";
  } catch (const json::exception& e) {
    throw ingest_error("bad header in " + path + ": " + e.what(), 0);
  }
  if (shape.size() != 4) throw ingest_error("tensor shape must have 4 dims in " + path, 0);
  FeatureMap map(shape[0], shape[1], shape[2], shape[3]);
  map.v = read_doubles(in, map.size(), float32, path);
  return map;
}

}  // namespace igc
