#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mbtrack {

using EntityId = std::uint32_t;
using ObjectId = std::uint32_t;

enum class Label { Candidate, Real, Background, Occluded };

std::string_view to_string(Label label);
Label label_from_string(std::string_view s);

/// Structured tracker event; serialized as one JSON line {"frame":..,"type":..,...data}.
struct TrackEvent {
  std::uint32_t frame_index = 0;
  std::string type;
  nlohmann::json data = nlohmann::json::object();
};

nlohmann::json to_json(const TrackEvent& e);

}  // namespace mbtrack
