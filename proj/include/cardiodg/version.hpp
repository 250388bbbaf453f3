#pragma once

namespace cardiodg {

/// Embedded in every artifact for provenance.
inline constexpr const char *kToolVersion = "1.0.0";

} // namespace cardiodg
