#include <pwrsim/units.hpp>

#include <gtest/gtest.h>

using namespace pwrsim;

TEST(Units, SecondsRoundHalfToEven) {
    EXPECT_EQ(seconds_to_time(1.5), 1'500'000);
    EXPECT_EQ(seconds_to_time(0.0000005), 0);
    EXPECT_EQ(seconds_to_time(0.0000015), 2);
    EXPECT_EQ(seconds_to_time(2700.0), 2'700'000'000);
}

TEST(Units, WattsRoundHalfToEven) {
    EXPECT_EQ(watts_to_power(190.0), 190'000);
    EXPECT_EQ(watts_to_power(9.0), 9'000);
    EXPECT_EQ(watts_to_power(0.0025), 2);
    EXPECT_EQ(watts_to_power(0.0035), 4);
}

TEST(Units, FormatSecondsHasSixDecimals) {
    EXPECT_EQ(format_seconds(0), "0.000000");
    EXPECT_EQ(format_seconds(10'000'000), "10.000000");
    EXPECT_EQ(format_seconds(1), "0.000001");
    EXPECT_EQ(format_seconds(-1'500'000), "-1.500000");
    EXPECT_EQ(format_seconds(123'456'789'012), "123456.789012");
}

TEST(Units, EnergyIsExactProduct) {
    // 2700 s at 190 W.
    const Energy e = Energy::of(2'700'000'000, 190'000);
    EXPECT_EQ(e, Energy::from_joules_exact(513'000));
    EXPECT_EQ(e.microjoules(), 513'000'000'000);
    EXPECT_DOUBLE_EQ(e.joules(), 513000.0);
    EXPECT_EQ(to_string(e), "513000000000000");
}

TEST(Units, EnergyDoesNotOverflowOnLongRuns) {
    // 128 nodes at 190 W for ten years exceeds int64 nanojoules.
    const Time ten_years = 10LL * 365 * 24 * 3600 * kMicrosPerSecond;
    Energy total;
    for (int i = 0; i < 128; ++i) {
        total += Energy::of(ten_years, 190'000);
    }
    EXPECT_EQ(total.microjoules(), 128LL * 190 * 10 * 365 * 24 * 3600 * 1'000'000);
    EXPECT_GT(total.nanojoules(), static_cast<Energy::Rep>(INT64_MAX));
}
