#pragma once

namespace gdlab {

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace gdlab
