#include "planforge/vocabulary.hpp"

#include <cstdint>
#include <cstdio>

#include "planforge/errors.hpp"

namespace planforge {

Vocabulary::Vocabulary(std::vector<std::string> roomNames, std::string version)
    : version_(std::move(version)) {
  int id = 0;
  for (auto& name : roomNames) {
    if (name == kInteriorDoor || name == kFrontDoor)
      throw ConfigError("door categories are implicit and may not be listed: " + name);
    for (const auto& c : categories_)
      if (c.name == name) throw ConfigError("duplicate category name: " + name);
    categories_.push_back({id++, std::move(name)});
  }
  categories_.push_back({id++, kInteriorDoor});
  categories_.push_back({id++, kFrontDoor});
}

const Vocabulary& Vocabulary::residential() {
  static const Vocabulary vocab(
      {"living_room", "kitchen", "bedroom", "bathroom", "balcony", "entrance", "dining_room",
       "study_room", "storage"},
      "residential-v1");
  return vocab;
}

const RoomCategory& Vocabulary::category(int id) const {
  if (id < 0 || id >= num_categories())
    throw ValidationError("category", "category id out of range: " + std::to_string(id));
  return categories_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(const std::string& name) const {
  for (const auto& c : categories_)
    if (c.name == name) return c.id;
  return std::nullopt;
}

int Vocabulary::require(const std::string& name, const std::string& field) const {
  if (auto id = find(name)) return *id;
  throw ValidationError(field, "unknown category '" + name + "'");
}

std::vector<std::string> Vocabulary::names() const {
  std::vector<std::string> out;
  out.reserve(categories_.size());
  for (const auto& c : categories_) out.push_back(c.name);
  return out;
}

std::string Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  mix(version_);
  for (const auto& c : categories_) mix(c.name);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace planforge
