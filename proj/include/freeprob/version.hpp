#pragma once

namespace freeprob {

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace freeprob
