#pragma once

// Adapter weights laid out as a dense (adapter, modality) table, the host-side
// mirror of the hot-set tensors A_hot[S, M, d, r] / B_hot[S, M, r, d].

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "tokroute/linalg.h"

namespace tokroute {

struct LoraPair {
  Matrix a;  // d x r (shrink)
  Matrix b;  // r x d (expand)

  std::size_t dim() const noexcept { return a.rows(); }
  std::size_t rank() const noexcept { return a.cols(); }

  bool operator==(const LoraPair&) const = default;
};

enum class BInit { zero, gaussian };

// c = a * |M| + m. Throws IndexError if modality >= num_modalities.
std::uint32_t composite_index(std::uint32_t adapter, std::uint32_t modality, std::size_t num_modalities);

// Inverse of composite_index: (adapter, modality).
std::pair<std::uint32_t, std::uint32_t> decompose_index(std::uint32_t target, std::size_t num_modalities);

class AdapterCatalog {
 public:
  // pairs are ordered adapter-major: index a * num_modalities + m.
  AdapterCatalog(std::size_t num_adapters, std::size_t num_modalities, std::vector<LoraPair> pairs);

  // A ~ N(0, 1) / sqrt(d); B is zero unless b_init == gaussian (then N(0, 1) / sqrt(r)).
  static AdapterCatalog random(std::size_t num_adapters, std::size_t num_modalities, std::size_t dim,
                               std::size_t rank, std::uint64_t seed, BInit b_init = BInit::zero);

  std::size_t num_adapters() const noexcept { return num_adapters_; }
  std::size_t num_modalities() const noexcept { return num_modalities_; }
  std::size_t num_targets() const noexcept { return pairs_.size(); }
  std::size_t dim() const noexcept { return pairs_.front().dim(); }
  std::size_t rank() const noexcept { return pairs_.front().rank(); }

  const LoraPair& pair(std::uint32_t adapter, std::uint32_t modality) const;
  const LoraPair& target(std::uint32_t target_id) const;
  std::span<const LoraPair> pairs() const noexcept { return pairs_; }

  bool operator==(const AdapterCatalog&) const = default;

 private:
  std::size_t num_adapters_;
  std::size_t num_modalities_;
  std::vector<LoraPair> pairs_;
};

// PTRT v1: "PTRT", u32 version, u32 |A|, |M|, d, r, then per (a, m) in order
// A row-major followed by B row-major, all little-endian f32.
inline constexpr std::uint32_t kCatalogFormatVersion = 1;
inline constexpr std::size_t kCatalogHeaderBytes = 4 + 5 * 4;

std::vector<std::byte> encode_catalog(const AdapterCatalog& catalog);
AdapterCatalog decode_catalog(std::span<const std::byte> bytes);

void save_catalog(const AdapterCatalog& catalog, const std::filesystem::path& path);
AdapterCatalog load_catalog(const std::filesystem::path& path);

}  // namespace tokroute
