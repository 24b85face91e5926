#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace ecgiot {

// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

using Clock = std::function<TimestampMs()>;

TimestampMs system_now_ms();

// "2026-10-15T08:30:00.250Z"
std::string format_rfc3339(TimestampMs ms);

// Accepts YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM). 't'/'z' and a
// space separator are tolerated. Returns nullopt on any syntax error.
std::optional<TimestampMs> parse_rfc3339(std::string_view text);

// "2026-10-15"
std::string format_day(TimestampMs ms);

}  // namespace ecgiot
