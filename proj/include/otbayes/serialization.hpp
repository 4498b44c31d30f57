#pragma once

#include "otbayes/ensemble.hpp"
#include "otbayes/ot_bayes.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace otbayes {

/// Raised for truncated, foreign or wrong-version files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kMapPairFormatVersion = 1;
inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

/// Versioned binary encoding: architecture descriptors, then parameter vectors
/// and frozen blocks as little-endian IEEE-754 doubles.
std::vector<std::uint8_t> encode_map_pair(const MapPair& pair);
MapPair decode_map_pair(const std::vector<std::uint8_t>& bytes);
void save_map_pair(const std::filesystem::path& path, const MapPair& pair);
MapPair load_map_pair(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_ensembles(const std::vector<Ensemble>& ensembles);
std::vector<Ensemble> decode_ensembles(const std::vector<std::uint8_t>& bytes);
void save_ensembles(const std::filesystem::path& path, const std::vector<Ensemble>& ensembles);
std::vector<Ensemble> load_ensembles(const std::filesystem::path& path);

}  // namespace otbayes
