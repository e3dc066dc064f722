#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>

#include "ekc/grid.hpp"

using namespace ekc;
namespace fs = std::filesystem;

namespace {

Grid small_grid() {
    // 4 x 3 grid, 2 layers, one land column and one single-layer column
    std::vector<double> lon = {0, 1, 2, 3};
    std::vector<double> lat = {10, 11, 12};
    std::vector<double> z = {5, 50};
    std::vector<double> depth(12, 100.0);
    std::vector<int> numlevels(12, 2);
    numlevels[0 * 4 + 1] = 0;  // land at (j=0, i=1)
    numlevels[1 * 4 + 2] = 1;  // shallow at (j=1, i=2)
    return make_grid(lon, lat, z, depth, numlevels);
}

}  // namespace

TEST_CASE("fractional index on monotonic axes") {
    std::vector<double> inc = {0, 1, 3, 7};
    CHECK(geo::frac_index(inc, 0) == 0.0);
    CHECK(geo::frac_index(inc, 2) == Catch::Approx(1.5));
    CHECK(geo::frac_index(inc, 7) == 3.0);
    CHECK(std::isnan(geo::frac_index(inc, -0.1)));
    CHECK(std::isnan(geo::frac_index(inc, 7.1)));

    std::vector<double> dec = {7, 3, 1, 0};
    CHECK(geo::frac_index(dec, 7) == 0.0);
    CHECK(geo::frac_index(dec, 2) == Catch::Approx(1.5));
    CHECK(geo::frac_index(dec, 0) == 3.0);
}

TEST_CASE("periodic longitude detection") {
    std::vector<double> global(360);
    for (int i = 0; i < 360; ++i) global[i] = i + 0.5;
    CHECK(geo::detect_periodic_x(global));
    std::vector<double> regional = {100, 101, 102, 103};
    CHECK_FALSE(geo::detect_periodic_x(regional));
}

TEST_CASE("coordinate mapping and its inverse") {
    Grid g = small_grid();
    auto fij = xy_to_fij(g, 1.5, 10.25);
    REQUIRE(fij.has_value());
    CHECK(fij->first == Catch::Approx(1.5));
    CHECK(fij->second == Catch::Approx(0.25));
    auto [lon, lat] = fij_to_xy(g, 1.5, 0.25);
    CHECK(lon == Catch::Approx(1.5));
    CHECK(lat == Catch::Approx(10.25));
    CHECK_FALSE(xy_to_fij(g, 10.0, 10.0).has_value());
    CHECK_FALSE(xy_to_fij(g, 1.0, 50.0).has_value());
}

TEST_CASE("periodic wrap maps into the seam cell") {
    std::vector<double> lon(36);
    for (int i = 0; i < 36; ++i) lon[i] = i * 10.0;
    Grid g = make_grid(lon, {0.0}, {0.0}, std::vector<double>(36, 10.0),
                       std::vector<int>(36, 1));
    REQUIRE(g.periodic_x);
    auto fij = xy_to_fij(g, 355.0, 0.0);
    REQUIRE(fij.has_value());
    CHECK(fij->first == Catch::Approx(35.5));
    auto fij2 = xy_to_fij(g, -5.0, 0.0);
    REQUIRE(fij2.has_value());
    CHECK(fij2->first == Catch::Approx(35.5));
    auto [lon2, lat2] = fij_to_xy(g, 35.5, 0.0);
    CHECK(std::fmod(lon2 + 360.0, 360.0) == Catch::Approx(355.0));
    (void)lat2;
}

TEST_CASE("layer index is clamped") {
    Grid g = small_grid();
    CHECK(z_to_fk(g, 0.0) == 0.0);
    CHECK(z_to_fk(g, 5.0) == 0.0);
    CHECK(z_to_fk(g, 27.5) == Catch::Approx(0.5));
    CHECK(z_to_fk(g, 50.0) == 1.0);
    CHECK(z_to_fk(g, 5000.0) == 1.0);
}

TEST_CASE("great-circle distance") {
    CHECK(great_circle_km(0, 0, 0, 0) == 0.0);
    // a quarter of the equator
    CHECK(great_circle_km(0, 0, 90, 0) == Catch::Approx(10007.543).margin(0.01));
    // symmetric in its arguments
    CHECK(great_circle_km(12, -30, 140, 45) ==
          Catch::Approx(great_circle_km(140, 45, 12, -30)));
}

TEST_CASE("surface interpolation with land renormalisation") {
    Grid g = small_grid();
    std::vector<float> field(12);
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 4; ++i) field[j * 4 + i] = static_cast<float>(i + 10 * j);

    // interior bilinear value away from land
    CHECK(h_surface(g, field, 2.5, 1.5) == Catch::Approx(0.5 * (12.5 + 22.5)));
    // the land corner (j=0,i=1) is skipped and weights renormalised
    double v = h_surface(g, field, 1.0, 0.5);
    CHECK(v == Catch::Approx(field[1 * 4 + 1]));  // all weight on the wet corner
    // a query carried entirely by a land corner has no data
    CHECK_THROWS_WITH(h_surface(g, field, 1.0, 0.0),
                      Catch::Matchers::ContainsSubstring("land"));
    // surrounded-by-land query throws
    Grid all_land = small_grid();
    for (auto& n : all_land.numlevels) n = 0;
    CHECK_THROWS_WITH(h_surface(all_land, field, 1.5, 1.5),
                      Catch::Matchers::ContainsSubstring("land"));
}

TEST_CASE("volume interpolation respects per-layer wetness") {
    Grid g = small_grid();
    std::vector<float> field(2 * 12);
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 4; ++i)
                field[(k * 3 + j) * 4 + i] = static_cast<float>(100 * k + 10 * j + i);

    // mid-layer interpolation at a fully wet column
    double v = h_volume(g, field, 0.0, 2.0, 0.5);
    CHECK(v == Catch::Approx(0.5 * (20.0) + 0.5 * (120.0)));
    // the shallow column (j=1,i=2) has no layer-1 data; neighbours fill in
    double s = h_volume(g, field, 2.5, 1.0, 1.0);
    CHECK(s == Catch::Approx(113.0));  // renormalised over the wet corner only
    // carried entirely by the dry part of the column
    CHECK_THROWS_WITH(h_volume(g, field, 2.0, 1.0, 1.0),
                      Catch::Matchers::ContainsSubstring("land"));
}

TEST_CASE("grid persistence round-trip") {
    Grid g = small_grid();
    GridCfg cfg;
    cfg.name = "g";
    cfg.data = (fs::temp_directory_path() /
                ("ekc_grid_" + std::to_string(::getpid()))).string();
    cfg.xvarname = "lon";
    cfg.yvarname = "lat";
    cfg.zvarname = "z";
    cfg.depthvarname = "depth";
    cfg.numlevelsvarname = "numlevels";
    save_grid(g, cfg);
    Grid r = load_grid(cfg);
    CHECK(r.ni == g.ni);
    CHECK(r.nj == g.nj);
    CHECK(r.nk == g.nk);
    CHECK(r.lon == g.lon);
    CHECK(r.numlevels == g.numlevels);
    CHECK(r.periodic_x == g.periodic_x);
    fs::remove_all(cfg.data);
}

TEST_CASE("grid validation") {
    CHECK_THROWS(make_grid({}, {0.0}, {0.0}, {}, {}));
    CHECK_THROWS_WITH(
        make_grid({0.0}, {0.0}, {5.0, 5.0}, {1.0}, {1}),
        Catch::Matchers::ContainsSubstring("strictly increasing"));
    CHECK_THROWS_WITH(make_grid({0.0}, {0.0}, {0.0}, {1.0}, {2}),
                      Catch::Matchers::ContainsSubstring("numlevels"));
}
