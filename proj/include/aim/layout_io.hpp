#pragma once

#include <string>

#include "aim/geometry.hpp"

namespace aim::geometry {

// Versioned JSON layout schema (see data/layouts/*.json). Throws
// std::runtime_error with a descriptive message on parse/validation failure.
std::string layout_to_json(const IntersectionLayout& layout);
IntersectionLayout layout_from_json(const std::string& text);

void save_layout(const IntersectionLayout& layout, const std::string& path);
IntersectionLayout load_layout(const std::string& path);

}  // namespace aim::geometry
