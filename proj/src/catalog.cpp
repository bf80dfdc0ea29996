#include "tokroute/catalog.h"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

#include "tokroute/binary_io.h"

namespace tokroute {

namespace binary {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) bytes[i] = static_cast<std::byte>(raw[i]);
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace binary

std::uint32_t composite_index(std::uint32_t adapter, std::uint32_t modality, std::size_t num_modalities) {
  if (modality >= num_modalities) {
    throw IndexError("modality " + std::to_string(modality) + " >= " + std::to_string(num_modalities));
  }
  const std::uint64_t c = std::uint64_t{adapter} * num_modalities + modality;
  if (c > std::numeric_limits<std::uint32_t>::max()) throw IndexError("composite index overflows u32");
  return static_cast<std::uint32_t>(c);
}

std::pair<std::uint32_t, std::uint32_t> decompose_index(std::uint32_t target, std::size_t num_modalities) {
  if (num_modalities == 0) throw IndexError("decompose_index with zero modalities");
  const auto m = static_cast<std::uint32_t>(num_modalities);
  return {target / m, target % m};
}

AdapterCatalog::AdapterCatalog(std::size_t num_adapters, std::size_t num_modalities,
                               std::vector<LoraPair> pairs)
    : num_adapters_(num_adapters), num_modalities_(num_modalities), pairs_(std::move(pairs)) {
  if (num_adapters == 0 || num_modalities == 0) throw ShapeError("catalog needs >= 1 adapter and modality");
  if (pairs_.size() != num_adapters * num_modalities) {
    throw ShapeError("catalog table has " + std::to_string(pairs_.size()) + " pairs, expected " +
                     std::to_string(num_adapters * num_modalities));
  }
  const std::size_t d = pairs_.front().a.rows();
  const std::size_t r = pairs_.front().a.cols();
  if (r > d) throw ShapeError("LoRA rank exceeds model dimension");
  for (const auto& p : pairs_) {
    if (p.a.rows() != d || p.a.cols() != r || p.b.rows() != r || p.b.cols() != d) {
      throw ShapeError("all catalog pairs must be (d x r, r x d) with shared d and r");
    }
  }
}

AdapterCatalog AdapterCatalog::random(std::size_t num_adapters, std::size_t num_modalities,
                                      std::size_t dim, std::size_t rank, std::uint64_t seed,
                                      BInit b_init) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  const double b_scale = 1.0 / std::sqrt(static_cast<double>(rank));
  std::vector<LoraPair> pairs;
  pairs.reserve(num_adapters * num_modalities);
  for (std::size_t t = 0; t < num_adapters * num_modalities; ++t) {
    Matrix a(dim, rank);
    for (float& v : a.data()) v = static_cast<float>(normal(rng) * a_scale);
    Matrix b(rank, dim);
    if (b_init == BInit::gaussian) {
      for (float& v : b.data()) v = static_cast<float>(normal(rng) * b_scale);
    }
    pairs.push_back({std::move(a), std::move(b)});
  }
  return AdapterCatalog(num_adapters, num_modalities, std::move(pairs));
}

const LoraPair& AdapterCatalog::pair(std::uint32_t adapter, std::uint32_t modality) const {
  if (adapter >= num_adapters_) {
    throw IndexError("adapter " + std::to_string(adapter) + " >= " + std::to_string(num_adapters_));
  }
  return pairs_[composite_index(adapter, modality, num_modalities_)];
}

const LoraPair& AdapterCatalog::target(std::uint32_t target_id) const {
  if (target_id >= pairs_.size()) {
    throw IndexError("target " + std::to_string(target_id) + " >= " + std::to_string(pairs_.size()));
  }
  return pairs_[target_id];
}

std::vector<std::byte> encode_catalog(const AdapterCatalog& catalog) {
  binary::Writer w;
  w.magic("PTRT");
  w.u32(kCatalogFormatVersion);
  w.u32(static_cast<std::uint32_t>(catalog.num_adapters()));
  w.u32(static_cast<std::uint32_t>(catalog.num_modalities()));
  w.u32(static_cast<std::uint32_t>(catalog.dim()));
  w.u32(static_cast<std::uint32_t>(catalog.rank()));
  for (const auto& p : catalog.pairs()) {
    w.f32s(p.a.data());
    w.f32s(p.b.data());
  }
  return w.bytes();
}

AdapterCatalog decode_catalog(std::span<const std::byte> bytes) {
  binary::Reader r(bytes);
  r.expect_magic("PTRT");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCatalogFormatVersion) {
    throw FormatError("unsupported catalog version " + std::to_string(version), version_at);
  }
  const std::size_t dims_at = r.offset();
  const std::uint32_t num_adapters = r.u32("num_adapters");
  const std::uint32_t num_modalities = r.u32("num_modalities");
  const std::uint32_t d = r.u32("d");
  const std::uint32_t rank = r.u32("r");
  if (num_adapters == 0 || num_modalities == 0 || d == 0 || rank == 0 || rank > d) {
    throw FormatError("invalid catalog dimensions", dims_at);
  }
  const std::uint64_t expected =
      std::uint64_t{num_adapters} * num_modalities * 2 * std::uint64_t{d} * rank * 4;
  if (r.remaining() < expected) {
    throw FormatError("truncated payload: need " + std::to_string(expected) + " bytes, have " +
                          std::to_string(r.remaining()),
                      r.offset());
  }
  std::vector<LoraPair> pairs;
  pairs.reserve(std::size_t{num_adapters} * num_modalities);
  for (std::size_t t = 0; t < std::size_t{num_adapters} * num_modalities; ++t) {
    Matrix a(d, rank);
    r.f32s(a.data(), "A");
    Matrix b(rank, d);
    r.f32s(b.data(), "B");
    pairs.push_back({std::move(a), std::move(b)});
  }
  r.expect_end();
  return AdapterCatalog(num_adapters, num_modalities, std::move(pairs));
}

void save_catalog(const AdapterCatalog& catalog, const std::filesystem::path& path) {
  binary::write_file(path, encode_catalog(catalog));
}

AdapterCatalog load_catalog(const std::filesystem::path& path) {
  return decode_catalog(binary::read_file(path));
}

}  // namespace tokroute
