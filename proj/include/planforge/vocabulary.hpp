#pragma once

#include <optional>
#include <string>
#include <vector>

namespace planforge {

/// Number of quantized coordinate bins; coordinate tokens occupy [0, kCoordBins).
inline constexpr int kCoordBins = 256;

struct RoomCategory {
  int id = 0;
  std::string name;
  int token() const { return kCoordBins + id; }
};

/// Category vocabulary plus the reserved special-token ids.
///
/// Room categories take ids [0, N_c - 2); the two door categories are always
/// appended last, interior_door then front_door. Token ids are laid out as
///   [0, 256)            coordinate bins
///   [256, 256 + N_c)    categories
///   256 + N_c           BoS
///   256 + N_c + 1       EoS
///   256 + N_c + 2       pad (category slot of BoS/EoS)
class Vocabulary {
 public:
  static constexpr const char* kInteriorDoor = "interior_door";
  static constexpr const char* kFrontDoor = "front_door";
  static constexpr const char* kLivingRoom = "living_room";

  Vocabulary(std::vector<std::string> roomNames, std::string version);

  /// Residential vocabulary with the category set used by common RPLAN
  /// preprocessing pipelines (9 room types + 2 door types).
  static const Vocabulary& residential();

  int num_categories() const { return static_cast<int>(categories_.size()); }
  int bos() const { return kCoordBins + num_categories(); }
  int eos() const { return bos() + 1; }
  int pad() const { return bos() + 2; }
  /// Total token-table size including reserved ids.
  int size() const { return pad() + 1; }

  const std::string& version() const { return version_; }
  const std::vector<RoomCategory>& categories() const { return categories_; }
  const RoomCategory& category(int id) const;
  std::optional<int> find(const std::string& name) const;
  /// Like find() but throws ValidationError naming `field`.
  int require(const std::string& name, const std::string& field = "category") const;

  int interior_door() const { return num_categories() - 2; }
  int front_door() const { return num_categories() - 1; }
  bool is_door(int id) const { return id >= interior_door(); }
  std::optional<int> living_room() const { return find(kLivingRoom); }

  bool is_category_token(int token) const {
    return token >= kCoordBins && token < kCoordBins + num_categories();
  }
  int category_of_token(int token) const { return token - kCoordBins; }

  /// Stable FNV-1a digest of version and category names, hex encoded.
  std::string hash() const;

  bool operator==(const Vocabulary& other) const {
    return version_ == other.version_ && names() == other.names();
  }

  std::vector<std::string> names() const;

 private:
  std::vector<RoomCategory> categories_;
  std::string version_;
};

}  // namespace planforge
