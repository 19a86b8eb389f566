#include <pwrsim/units.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace pwrsim {

namespace {

std::int64_t round_half_even(double v) {
    const double fl = std::floor(v);
    const double diff = v - fl;
    double r = fl;
    if (diff > 0.5) {
        r = fl + 1.0;
    } else if (diff == 0.5) {
        r = std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
    }
    return static_cast<std::int64_t>(r);
}

}  // namespace

Time seconds_to_time(double seconds) { return round_half_even(seconds * static_cast<double>(kMicrosPerSecond)); }

Power watts_to_power(double watts) { return round_half_even(watts * 1000.0); }

std::string format_seconds(Time t) {
    std::string out;
    if (t < 0) {
        out.push_back('-');
        t = -t;
    }
    std::string frac = std::to_string(t % kMicrosPerSecond);
    out += std::to_string(t / kMicrosPerSecond);
    out.push_back('.');
    out.append(6 - frac.size(), '0');
    out += frac;
    return out;
}

std::string to_string(Energy e) {
    Energy::Rep v = e.nanojoules();
    if (v == 0) {
        return "0";
    }
    const bool neg = v < 0;
    std::string digits;
    while (v != 0) {
        const int d = static_cast<int>(v % 10);
        digits.push_back(static_cast<char>('0' + std::abs(d)));
        v /= 10;
    }
    if (neg) {
        digits.push_back('-');
    }
    std::reverse(digits.begin(), digits.end());
    return digits;
}

}  // namespace pwrsim
