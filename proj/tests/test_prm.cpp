#include <catch2/catch_amalgamated.hpp>

#include "ekc/prm.hpp"

using namespace ekc;

static const char* kMainPrm = R"(
MODE    = EnKF
SCHEME  = ETKF
ALPHA   = 0.9
MODEL   = model.prm
GRID    = grid.prm
OBSTYPES = obstypes.prm
OBS     = obs.prm
DATE    = 6085.5
ENSDIR  = ens
KFACTOR = 2
RFACTOR = 1.5
LOCRAD  = 500
STRIDE  = 3
SOBSTRIDE = 2
FIELDBUFFERSIZE = 4
INFLATION = 1.06 0.5
ZSTATINTS = 0 100 100 500
REGION  = Tropics -180 180 -30 30
POINTLOG 17 30
EXITACTION = BACKTRACE
BADBATCHES = SLA 0.06 0.10 500
)";

TEST_CASE("main prm: full block") {
    DaConfig c = parse_main(kMainPrm);
    CHECK(c.mode == DaMode::ENKF);
    CHECK(c.scheme == DaScheme::ETKF);
    CHECK(c.alpha == 0.9);
    CHECK(c.model_file == "model.prm");
    CHECK(c.date == 6085.5);
    CHECK(c.ensdir == "ens");
    CHECK(c.kfactor == 2.0);
    CHECK(c.rfactor == 1.5);
    REQUIRE(c.locrad == std::vector<double>{500});
    CHECK(c.locweight == std::vector<double>{1.0});
    CHECK(c.stride == 3);
    CHECK(c.sobstride == 2);
    CHECK(c.inflation.mult == 1.06);
    CHECK(c.inflation.cap == 0.5);
    CHECK_FALSE(c.inflation.plain);
    REQUIRE(c.zstatints.size() == 2);
    CHECK(c.zstatints[1] == std::pair<double, double>{100, 500});
    REQUIRE(c.regions.size() == 1);
    CHECK(c.regions[0].name == "Tropics");
    CHECK(c.regions[0].lat2 == 30);
    REQUIRE(c.pointlogs.size() == 1);
    CHECK(c.pointlogs[0] == std::pair<int, int>{17, 30});
    REQUIRE(c.badbatches.size() == 1);
    CHECK(c.badbatches[0].type == "SLA");
    CHECK(c.badbatches[0].max_bias == 0.06);
    CHECK(c.badbatches[0].max_mad == 0.10);
    CHECK(c.badbatches[0].min_nobs == 500);
}

TEST_CASE("main prm: defaults") {
    DaConfig c = parse_main(
        "MODE ENKF\nMODEL m\nGRID g\nOBSTYPES t\nOBS o\nDATE 0\nENSDIR e\n");
    CHECK(c.scheme == DaScheme::DENKF);
    CHECK(c.alpha == 1.0);
    CHECK(std::isnan(c.kfactor));
    CHECK(c.rfactor == 1.0);
    CHECK(c.locrad.empty());
    CHECK(c.stride == 1);
    CHECK(c.sobstride == 1);
    CHECK(c.inflation.mult == 1.0);
    CHECK(c.inflation.cap == 0.5);
    REQUIRE(c.zstatints.size() == 3);
    CHECK(c.zstatints[0] == std::pair<double, double>{0, 50});
    CHECK(c.zstatints[1] == std::pair<double, double>{50, 500});
    CHECK(c.zstatints[2].first == 500);
    CHECK(std::isinf(c.zstatints[2].second));
    REQUIRE(c.regions.size() == 1);
    CHECK(c.regions[0].name == "Global");
    CHECK(c.regions[0].lon1 == -999);
    CHECK(c.regions[0].lon2 == 999);
}

TEST_CASE("main prm: errors") {
    CHECK_THROWS_WITH(parse_main("MODEL m\nGRID g\nOBSTYPES t\nOBS o\nDATE 0\nENSDIR e\n"),
                      Catch::Matchers::ContainsSubstring("MODE required"));
    CHECK_THROWS_WITH(
        parse_main("MODE ENOI\nMODEL m\nGRID g\nOBSTYPES t\nOBS o\nDATE 0\nENSDIR e\n"),
        Catch::Matchers::ContainsSubstring("BGDIR required for ENOI"));
    CHECK_THROWS_WITH(parse_main(std::string(kMainPrm) + "DATE = 1\n"),
                      Catch::Matchers::ContainsSubstring("duplicate key DATE"));
    CHECK_THROWS_WITH(parse_main(std::string(kMainPrm) + "NOSUCHKEY = 1\n"),
                      Catch::Matchers::ContainsSubstring("unknown key NOSUCHKEY"));
}

TEST_CASE("main prm: bad-batch list with a misspelt key") {
    std::string text = std::string(kMainPrm) +
                       "BADBATCHES = SST 0.5 2 10000\n"
                       "BADBATCHES = SAL 1.5 2 0\n";
    DaConfig c = parse_main(text);
    REQUIRE(c.badbatches.size() == 3);
    CHECK(c.badbatches[1].type == "SST");
    CHECK(c.badbatches[1].min_nobs == 10000);
    CHECK(c.badbatches[2].type == "SAL");

    CHECK_THROWS_WITH(parse_main(text + "BBADBATCHES = TEM 4 5 0\n"),
                      Catch::Matchers::ContainsSubstring("unknown key BBADBATCHES"));
}

TEST_CASE("main prm: multi-scale localisation weights are normalised") {
    std::string text = std::string(kMainPrm);
    text.replace(text.find("LOCRAD  = 500"), 13, "LOCRAD 150 500\nWEIGHT 0.9 0.1");
    DaConfig c = parse_main(text);
    REQUIRE(c.locrad == std::vector<double>{150, 500});
    REQUIRE(c.locweight.size() == 2);
    CHECK(c.locweight[0] == Catch::Approx(0.9));
    CHECK(c.locweight[1] == Catch::Approx(0.1));
}

TEST_CASE("inflation entry variants") {
    auto with_inflation = [](const std::string& line) {
        std::string text =
            "MODE ENKF\nMODEL m\nGRID g\nOBSTYPES t\nOBS o\nDATE 0\nENSDIR e\n" + line;
        return parse_main(text).inflation;
    };
    Inflation a = with_inflation("INFLATION = 1.06 0.5\n");
    CHECK(a.mult == 1.06);
    CHECK(a.cap == 0.5);
    // a single value is equivalent to a cap of 1
    Inflation b = with_inflation("INFLATION = 1.06\n");
    CHECK(b.mult == 1.06);
    CHECK(b.cap == 1.0);
    CHECK_FALSE(b.plain);
    Inflation d = with_inflation("INFLATION = 1.06 PLAIN\n");
    CHECK(d.plain);
    CHECK_THROWS(with_inflation("INFLATION = 0.9\n"));
}

TEST_CASE("model prm") {
    ModelCfg m = parse_model(
        "NAME = ocean\n"
        "VAR = eta\nGRID = g1\nINFLATION = 1.1 0.5\n"
        "VAR = temp\nRANDOMISE 0.99 0.3\n");
    CHECK(m.name == "ocean");
    REQUIRE(m.vars.size() == 2);
    CHECK(m.vars[0].name == "eta");
    CHECK(m.vars[0].grid == "g1");
    REQUIRE(m.vars[0].inflation.has_value());
    CHECK(m.vars[0].inflation->mult == 1.1);
    CHECK_FALSE(m.vars[1].inflation.has_value());
    REQUIRE(m.vars[1].randomise.has_value());
    CHECK(m.vars[1].randomise->lambda == 0.99);
    CHECK(m.vars[1].randomise->sigma0 == 0.3);

    CHECK_THROWS(parse_model("NAME = x\nVAR = v\nRANDOMISE 1.5 1\n"));
    CHECK_THROWS(parse_model("NAME = x\n"));
}

TEST_CASE("grid prm") {
    GridCfg g = parse_grid(
        "NAME = g1\nVTYPE = z\nDATA = griddir\n"
        "XDIMNAME = ni\nYDIMNAME = nj\nZDIMNAME = nk\n"
        "XVARNAME = lon\nYVARNAME = lat\nZVARNAME = z\n"
        "DEPTHVARNAME = depth\nNUMLEVELSVARNAME = numlevels\n");
    CHECK(g.name == "g1");
    CHECK(g.data == "griddir");
    CHECK(g.xvarname == "lon");
    CHECK(g.numlevelsvarname == "numlevels");
    CHECK_THROWS_WITH(parse_grid("NAME = g\nVTYPE = sigma\nDATA = d\n"),
                      Catch::Matchers::ContainsSubstring("not supported"));
}

TEST_CASE("obstypes prm") {
    std::vector<ObsTypeSpec> t = parse_obstypes(
        "NAME = SLA\n"
        "VAR = eta\n"
        "ISSURFACE = yes\n"
        "OFFSET = mdt.ekc mdt\n"
        "HFUNCTION = standard\n"
        "ASYNC = 1\n"
        "LOCRAD = 200\n"
        "RFACTOR = 2\n"
        "MINVALUE = -2\nMAXVALUE = 2\n"
        "\n"
        "NAME = TEM\n"
        "VAR = temp\n"
        "ISSURFACE = no\n"
        "HFUNCTION = standard\n"
        "ZMAX = 2000\n");
    REQUIRE(t.size() == 2);
    CHECK(t[0].name == "SLA");
    CHECK(t[0].issurface);
    REQUIRE(t[0].offset.has_value());
    CHECK(t[0].offset->first == "mdt.ekc");
    REQUIRE(t[0].async.has_value());
    CHECK(*t[0].async == 1.0);
    CHECK(t[0].locrad == std::vector<double>{200});
    CHECK(t[0].rfactor == 2.0);
    CHECK(t[0].minvalue == -2.0);
    CHECK_FALSE(t[1].issurface);
    CHECK_FALSE(t[1].async.has_value());
    CHECK(t[1].locrad.empty());
    CHECK(t[1].zmax == 2000.0);

    CHECK_THROWS_WITH(parse_obstypes("NAME = A\nVAR = v\nISSURFACE = yes\n"),
                      Catch::Matchers::ContainsSubstring("HFUNCTION required"));
    CHECK_THROWS_WITH(
        parse_obstypes("NAME = A\nVAR = v\nISSURFACE = yes\nHFUNCTION = standard\n"
                       "NAME = A\nVAR = v\nISSURFACE = yes\nHFUNCTION = standard\n"),
        Catch::Matchers::ContainsSubstring("duplicate observation type"));
    CHECK_THROWS(parse_obstypes("NAME = A\nVAR = v\nISSURFACE = yes\n"
                                "HFUNCTION = standard\nASYNC = 0\n"));
}

TEST_CASE("obsdata prm: two sections for the same product") {
    std::vector<ObsDataSection> s = parse_obsdata(
        "# set observation error for Geosat to 7cm\n"
        "product == RADS\n"
        "type = SLA\n"
        "reader = csv\n"
        "file=obs/RADS-IB/y2006/m05/g?_d23.csv\n"
        "error_std = 0.07\n"
        "\n"
        "# use default errors for other altimeters\n"
        "product == RADS\n"
        "type = SLA\n"
        "reader = csv\n"
        "file=obs/RADS-IB/y2006/m05/[!g]?_d23.csv\n");
    REQUIRE(s.size() == 2);
    CHECK(s[0].product == "RADS");
    CHECK(s[0].type == "SLA");
    CHECK(s[0].reader == "csv");
    REQUIRE(s[0].files.size() == 1);
    CHECK(s[0].files[0] == "obs/RADS-IB/y2006/m05/g?_d23.csv");
    REQUIRE(s[0].error_std.size() == 1);
    CHECK_FALSE(s[0].error_std[0].from_file);
    CHECK(s[0].error_std[0].value == 0.07);
    CHECK(s[0].error_std[0].op == ErrorStdOp::EQUAL);
    CHECK(s[1].error_std.empty());
    // glob character classes survive lexing
    CHECK(s[1].files[0] == "obs/RADS-IB/y2006/m05/[!g]?_d23.csv");
}

TEST_CASE("obsdata prm: error-std operations and parameters") {
    std::vector<ObsDataSection> s = parse_obsdata(
        "PRODUCT = P\nREADER = csv\nTYPE = SLA\nFILE = a.csv\n"
        "ERROR_STD = 0.2 EQUAL\n"
        "ERROR_STD = err.ekc sigma PL\n"
        "ERROR_STD = 1.5 MU\n"
        "ERROR_STD = 0.05 MI\n"
        "ERROR_STD = 0.5 MA\n"
        "PARAMETER MINDEPTH = 150\n");
    REQUIRE(s.size() == 1);
    REQUIRE(s[0].error_std.size() == 5);
    CHECK(s[0].error_std[0].op == ErrorStdOp::EQUAL);
    CHECK(s[0].error_std[1].from_file);
    CHECK(s[0].error_std[1].file == "err.ekc");
    CHECK(s[0].error_std[1].varname == "sigma");
    CHECK(s[0].error_std[1].op == ErrorStdOp::PLUS);
    CHECK(s[0].error_std[2].op == ErrorStdOp::MULT);
    CHECK(s[0].error_std[3].op == ErrorStdOp::MIN);
    CHECK(s[0].error_std[4].op == ErrorStdOp::MAX);
    REQUIRE(s[0].parameters.size() == 1);
    CHECK(s[0].parameters[0] == std::pair<std::string, std::string>{"MINDEPTH", "150"});

    CHECK_THROWS_WITH(
        parse_obsdata("PRODUCT = P\nREADER = csv\nTYPE = T\nFILE = f\n"
                      "ERROR_STD = 0.1 WHAT\n"),
        Catch::Matchers::ContainsSubstring("unknown ERROR_STD operation"));
}

TEST_CASE("serialization round-trips") {
    DaConfig c = parse_main(kMainPrm);
    DaConfig c2 = parse_main(serialize_main(c));
    CHECK(c2.mode == c.mode);
    CHECK(c2.scheme == c.scheme);
    CHECK(c2.alpha == c.alpha);
    CHECK(c2.date == c.date);
    CHECK(c2.locrad == c.locrad);
    CHECK(c2.inflation.mult == c.inflation.mult);
    CHECK(c2.badbatches.size() == c.badbatches.size());
    CHECK(c2.regions[0].name == c.regions[0].name);

    auto types = parse_obstypes(
        "NAME = SLA\nVAR = eta\nISSURFACE = yes\nHFUNCTION = standard\nASYNC = 1\n");
    auto types2 = parse_obstypes(serialize_obstypes(types));
    REQUIRE(types2.size() == 1);
    CHECK(types2[0].name == "SLA");
    CHECK(types2[0].async == types[0].async);
}
