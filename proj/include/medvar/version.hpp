#pragma once

namespace medvar {

inline constexpr const char* kVersion = "0.1.0";

// Schema tag stamped into every JSON report; bump on breaking layout changes.
inline constexpr const char* kReportSchemaVersion = "1";

}  // namespace medvar
