#include <doctest.h>

#include <string>

#include "sqj/demo.hpp"
#include "sqj/network.hpp"

using namespace sqj;

namespace {

const char* kFire = R"(# squeeze then two expands
sq  conv    input      56 56 64  1 1 0 16  1  5 4 7 9
e1  conv    sq         -  -  -   1 1 0 64  1  - 3 7 8
e3  conv    sq         56 56 16  3 1 1 64  1  4 3 7 8
cat concat  e1,e3      -  -  -   - - - -   -  - 3 - -
)";

}  // namespace

TEST_CASE("conv output dims use floor") {
    const auto g = load_network("conv1 conv input 227 227 3 3 2 0 64 1 - - - -\n");
    const auto& n = g.node("conv1");
    CHECK(n.out_shape == Shape{113, 113, 64});
    CHECK(g.conv_spec(n).h_out() == 113);
    CHECK(g.conv_spec(n).w_out() == 113);
    CHECK(g.input_shape() == Shape{227, 227, 3});
}

TEST_CASE("same padding keeps spatial size") {
    const auto g = load_network("c conv input 56 56 8 3 1 1 16 0 - - - -\n");
    CHECK(g.output().out_shape == Shape{56, 56, 16});
}

TEST_CASE("window_out_dim against a direct count") {
    for (int in = 1; in <= 30; ++in)
        for (int k = 1; k <= 5; ++k)
            for (int s = 1; s <= 4; ++s)
                for (int p = 0; p <= 2; ++p) {
                    // Count window start positions that fit inside the padded extent.
                    int count = 0;
                    for (int start = 0; start + k <= in + 2 * p; start += s) ++count;
                    if (count == 0) continue;
                    REQUIRE(window_out_dim(in, k, s, p) == count);
                }
}

TEST_CASE("concat of a fire module") {
    const auto g = load_network(kFire);
    CHECK(g.node("cat").out_shape == Shape{56, 56, 128});
    CHECK(g.node("e1").in_shape == Shape{56, 56, 16});
    CHECK(g.node("e1").fl_in == 4);  // inherited from the producer
    CHECK(g.node("cat").fl_in == 3);
    CHECK(g.consumers("sq") == std::vector<std::string>{"e1", "e3"});
    CHECK(g.quantized());
    CHECK(g.input_fl() == 5);
}

TEST_CASE("write_network round trips") {
    const auto g = load_network(kFire);
    const auto text = write_network(g);
    const auto again = load_network(text);
    CHECK(write_network(again) == text);
    for (const auto* name : {"sq", "e1", "e3", "cat"}) {
        const auto& a = g.node(name);
        const auto& b = again.node(name);
        CHECK(a.out_shape == b.out_shape);
        CHECK(a.fl_in == b.fl_in);
        CHECK(a.fl_out == b.fl_out);
        CHECK(a.fl_w == b.fl_w);
        CHECK(a.fl_b == b.fl_b);
    }
    const auto sq = squeezenet_v11();
    CHECK(write_network(load_network(write_network(sq))) == write_network(sq));
}

TEST_CASE("parse errors carry the line number") {
    auto msg = [](const std::string& text) {
        try {
            load_network(text);
        } catch (const NetworkError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg("# c\n\nc conv input 4 4 1 1 1 0\n").find("line 3") != std::string::npos);
    CHECK(msg("c blur input 4 4 1 1 1 0 1 0 - - - -\n").find("unknown layer kind") !=
          std::string::npos);
    CHECK(msg("c conv input 4 x 1 1 1 0 1 0 - - - -\n").find("line 1") != std::string::npos);
}

TEST_CASE("shape mismatches name the node") {
    auto msg = [](const std::string& text) {
        try {
            load_network(text);
        } catch (const NetworkError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg("a conv input 8 8 3 1 1 0 4 0 - - - -\n"
              "b conv a 8 8 5 1 1 0 4 0 - - - -\n")
              .find("'b'") != std::string::npos);
    CHECK(msg("a conv input 8 8 3 1 1 0 4 0 - - - -\n"
              "p maxpool a - - - 2 2 0 - - - - - -\n"
              "m concat a,p - - - - - - - - - - - -\n")
              .find("'m'") != std::string::npos);
    CHECK(msg("a conv nowhere 8 8 3 1 1 0 4 0 - - - -\n").find("'a'") != std::string::npos);
    CHECK(msg("a conv input 2 2 3 5 1 0 4 0 - - - -\n").find("empty") != std::string::npos);
    CHECK(msg("a conv input 4 4 1 1 1 0 1 0 3 3 2 6\n").find("bias FL") != std::string::npos);
}

TEST_CASE("squeezenet v1.1 shapes") {
    const auto g = squeezenet_v11();
    CHECK(g.node("conv1").out_shape == Shape{113, 113, 64});
    CHECK(g.node("pool1").out_shape == Shape{56, 56, 64});
    CHECK(g.node("fire2_concat").out_shape == Shape{56, 56, 128});
    CHECK(g.node("conv10").out_shape.c == 1000);
    CHECK(g.output().out_shape == Shape{1, 1, 1000});
}
