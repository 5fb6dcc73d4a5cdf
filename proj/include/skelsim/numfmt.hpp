#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace skelsim {

/// Locale-independent decimal formatting (std::to_chars). The shortest form
/// round-trips the exact double; the precision form prints the given number
/// of significant digits. Both are byte-stable for identical inputs, which
/// is what makes rerun outputs comparable.
inline std::string format_double(double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline std::string format_double(double value, int significant_digits) {
    char buf[48];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                         std::chars_format::general, significant_digits);
    return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

} // namespace skelsim
