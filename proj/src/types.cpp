#include "mbtrack/types.hpp"

#include <stdexcept>

namespace mbtrack {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Candidate: return "Candidate";
    case Label::Real: return "Real";
    case Label::Background: return "Background";
    case Label::Occluded: return "Occluded";
  }
  return "Unknown";
}

Label label_from_string(std::string_view s) {
  if (s == "Candidate") return Label::Candidate;
  if (s == "Real") return Label::Real;
  if (s == "Background") return Label::Background;
  if (s == "Occluded") return Label::Occluded;
  throw std::invalid_argument("unknown label: " + std::string(s));
}

nlohmann::json to_json(const TrackEvent& e) {
  nlohmann::json j = nlohmann::json::object();
  j["frame"] = e.frame_index;
  j["type"] = e.type;
  for (auto it = e.data.begin(); it != e.data.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace mbtrack
