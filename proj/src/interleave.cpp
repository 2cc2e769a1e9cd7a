#include "igc/interleave.hpp"

#include <algorithm>
#include <numeric>

namespace igc {

namespace {

// Fastest-to-slowest digit order for layout l (1-based): digit l first, the
// rest in ascending order.
std::vector<int> layout_order(int digit_count, int l) {
  std::vector<int> order;
  order.reserve(digit_count);
  order.push_back(l - 1);
  for (int m = 0; m < digit_count; ++m)
    if (m != l - 1) order.push_back(m);
  return order;
}

int encode_in_order(const std::vector<int>& digits, const std::vector<int>& order,
                    const std::vector<int>& radices) {
  int index = 0, stride = 1;
  for (int d : order) {
    index += digits[d] * stride;
    stride *= radices[d];
  }
  return index;
}

std::vector<int> decode_in_order(int index, const std::vector<int>& order,
                                 const std::vector<int>& radices) {
  std::vector<int> digits(radices.size(), 0);
  for (int d : order) {
    digits[d] = index % radices[d];
    index /= radices[d];
  }
  return digits;
}

int checked_product(const std::vector<int>& radices) {
  long long p = 1;
  for (int r : radices) {
    if (r < 1) throw structural_error("branch widths must be >= 1");
    p *= r;
    if (p > (1 << 26)) throw structural_error("channel count out of supported range");
  }
  return static_cast<int>(p);
}

}  // namespace

int MixedRadixLayout::channels() const { return checked_product(radices); }

int MixedRadixLayout::encode(const std::vector<int>& digits) const {
  return encode_in_order(digits, layout_order(static_cast<int>(radices.size()), fastest), radices);
}

std::vector<int> MixedRadixLayout::decode(int index) const {
  return decode_in_order(index, layout_order(static_cast<int>(radices.size()), fastest), radices);
}

PermutationSpec build_interleave(const std::vector<int>& radices, int l) {
  const int digit_count = static_cast<int>(radices.size());
  if (l < 1 || l >= digit_count)
    throw usage_error("build_interleave: l must be in [1, L-1]");
  const int channels = checked_product(radices);
  const auto src_order = layout_order(digit_count, l);
  const auto dst_order = layout_order(digit_count, l + 1);
  PermutationSpec perm;
  perm.map.resize(channels);
  for (int src = 0; src < channels; ++src) {
    auto digits = decode_in_order(src, src_order, radices);
    perm.map[src] = encode_in_order(digits, dst_order, radices);
  }
  return perm;
}

FactorChain build_chain(int channels, int spatial_taps, const std::vector<int>& branch_widths,
                        ChainMode mode) {
  if (branch_widths.empty()) throw usage_error("build_chain: empty branch width list");
  const int depth = static_cast<int>(branch_widths.size());
  const long long product =
      std::accumulate(branch_widths.begin(), branch_widths.end(), 1LL,
                      [](long long a, int b) { return a * b; });
  if (mode == ChainMode::loose) {
    // Loose inputs carry a single pointwise width; factor 1 is depthwise.
    for (int l = 1; l < depth; ++l)
      if (branch_widths[l] != branch_widths[1])
        throw usage_error("loose chains use one pointwise branch width");
    if (branch_widths[0] != 1) throw usage_error("loose chains start with a depthwise factor");
    return build_loose_chain(channels, spatial_taps, depth > 1 ? branch_widths[1] : channels,
                             depth)
        .chain;
  }
  if (product != channels)
    throw structural_error(
        "build_chain: branch widths do not multiply to the channel count; use loose mode");

  FactorChain chain;
  for (int l = 0; l < depth; ++l)
    chain.factors.push_back(
        GroupConvSpec::square(channels, branch_widths[l], l == 0 ? spatial_taps : 1));
  for (int l = 1; l < depth; ++l)
    chain.interleaves.push_back(build_interleave(branch_widths, l));
  chain.validate();
  // Factor l only moves digit l, so every input/output pair has one path.
  if (!is_exactly_one_path(compose_structure(chain)))
    throw structural_error("build_chain: constructed chain failed the one-path check");
  return chain;
}

PermutationSpec branch_shuffle(int channels, int branches) {
  if (branches < 1 || channels % branches != 0)
    throw structural_error("branch_shuffle: branch count must divide the channels");
  return build_interleave({channels / branches, branches}, 1);
}

namespace {

// Restriction of a padded-space permutation to its first `channels` source
// indices, with the images compacted in order.
PermutationSpec compact_to_live(const PermutationSpec& full, int channels) {
  std::vector<int> live(full.map.begin(), full.map.begin() + channels);
  std::vector<int> sorted = live;
  std::sort(sorted.begin(), sorted.end());
  PermutationSpec compact;
  compact.map.resize(channels);
  for (int j = 0; j < channels; ++j)
    compact.map[j] = static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), live[j]) - sorted.begin());
  return compact;
}

}  // namespace

LooseChain build_loose_chain(int channels, int spatial_taps, int k, int depth) {
  if (channels < 1 || k < 2 || depth < 2)
    throw usage_error("build_loose_chain: need channels >= 1, k >= 2, depth >= 2");

  FactorChain chain;
  chain.factors.push_back(GroupConvSpec::loose(channels, 1, spatial_taps));
  for (int l = 1; l < depth; ++l) chain.factors.push_back(GroupConvSpec::loose(channels, k, 1));

  // Padded index space: depthwise digit of extent 1 plus depth-1 digits of
  // extent k. Live channels are the first `channels` indices of each layout.
  std::vector<int> radices(depth, k);
  radices[0] = 1;
  long long padded = 1;
  for (int l = 1; l < depth; ++l) padded *= k;

  if (padded >= channels) {
    for (int l = 1; l < depth; ++l) {
      PermutationSpec full = build_interleave(radices, l);
      chain.interleaves.push_back(padded == channels ? std::move(full)
                                                     : compact_to_live(full, channels));
    }
  } else {
    // k^(depth-1) cannot reach the channel count, so density is out of
    // reach; mix consecutive layers round-robin and let the report
    // quantify the coverage.
    const int branches = (channels + k - 1) / k;
    PermutationSpec full = build_interleave({k, branches}, 1);
    for (int l = 1; l < depth; ++l)
      chain.interleaves.push_back(branches * k == channels ? full
                                                           : compact_to_live(full, channels));
  }
  chain.validate();

  LooseChain out;
  out.report = verify_complementary(chain, padded == channels ? ComplementarityMode::strict
                                                              : ComplementarityMode::loose);
  out.chain = std::move(chain);
  return out;
}

}  // namespace igc
