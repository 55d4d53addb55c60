#pragma once

namespace cfspn {

// Bumped whenever the checkpoint or circuit JSON layout changes.
inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kVersion = "0.1.0";

} // namespace cfspn
