#include "ecgiot/timeutil.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace ecgiot {

namespace chr = std::chrono;

TimestampMs system_now_ms()
{
    return chr::duration_cast<chr::milliseconds>(chr::system_clock::now().time_since_epoch()).count();
}

namespace {

struct Civil {
    int year;
    unsigned month, day;
    std::int64_t ms_of_day;
};

Civil split(TimestampMs ms)
{
    const chr::sys_time<chr::milliseconds> tp{chr::milliseconds{ms}};
    const auto day = chr::floor<chr::days>(tp);
    const chr::year_month_day ymd{day};
    return {int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()), (tp - day).count()};
}

bool read_int(std::string_view text, std::size_t pos, std::size_t width, int& out)
{
    if (pos + width > text.size())
        return false;
    for (std::size_t i = pos; i < pos + width; ++i)
        if (text[i] < '0' || text[i] > '9')
            return false;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, out);
    return ec == std::errc{} && ptr == text.data() + pos + width;
}

bool expect(std::string_view text, std::size_t pos, char c)
{
    return pos < text.size() && text[pos] == c;
}

}  // namespace

std::string format_rfc3339(TimestampMs ms)
{
    const Civil c = split(ms);
    const auto h = c.ms_of_day / 3'600'000;
    const auto m = (c.ms_of_day / 60'000) % 60;
    const auto s = (c.ms_of_day / 1000) % 60;
    const auto frac = c.ms_of_day % 1000;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", c.year, c.month, c.day,
                  static_cast<long long>(h), static_cast<long long>(m), static_cast<long long>(s),
                  static_cast<long long>(frac));
    return buf;
}

std::string format_day(TimestampMs ms)
{
    const Civil c = split(ms);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
    return buf;
}

std::optional<TimestampMs> parse_rfc3339(std::string_view text)
{
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    if (!read_int(text, 0, 4, year) || !expect(text, 4, '-') || !read_int(text, 5, 2, month) ||
        !expect(text, 7, '-') || !read_int(text, 8, 2, day))
        return std::nullopt;
    if (text.size() < 11 || (text[10] != 'T' && text[10] != 't' && text[10] != ' '))
        return std::nullopt;
    if (!read_int(text, 11, 2, hour) || !expect(text, 13, ':') || !read_int(text, 14, 2, minute) ||
        !expect(text, 16, ':') || !read_int(text, 17, 2, second))
        return std::nullopt;

    std::size_t pos = 19;
    std::int64_t millis = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        int scale = 100;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
            millis += (text[pos] - '0') * scale;
            scale /= 10;
            ++pos;
        }
        if (pos == start)
            return std::nullopt;
    }

    std::int64_t offset_min = 0;
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) {
        ++pos;
    } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
        const int sign = text[pos] == '+' ? 1 : -1;
        int oh = 0, om = 0;
        if (!read_int(text, pos + 1, 2, oh) || !expect(text, pos + 3, ':') || !read_int(text, pos + 4, 2, om))
            return std::nullopt;
        if (oh > 23 || om > 59)
            return std::nullopt;
        offset_min = sign * (oh * 60 + om);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != text.size())
        return std::nullopt;

    const chr::year_month_day ymd{chr::year{year}, chr::month{unsigned(month)}, chr::day{unsigned(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
        return std::nullopt;

    const auto days = chr::sys_days{ymd}.time_since_epoch().count();
    const std::int64_t secs = days * 86400LL + hour * 3600LL + minute * 60LL + second - offset_min * 60;
    return secs * 1000 + millis;
}

}  // namespace ecgiot
