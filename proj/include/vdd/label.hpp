#pragma once

#include <string_view>

namespace vdd {

/// Binary voice label. Class index 0 is normal, 1 is pathological.
enum class Label { Normal = 0, Pathol = 1 };

constexpr int class_index(Label label) { return static_cast<int>(label); }
constexpr Label label_from_index(int index) { return index == 0 ? Label::Normal : Label::Pathol; }

std::string_view to_string(Label label);
/// "normal" / "pathol"; throws UnknownLabel otherwise.
Label parse_label(std::string_view text);

}  // namespace vdd
