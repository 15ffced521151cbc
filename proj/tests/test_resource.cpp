#include <doctest.h>

#include "hwopt/fileio.hpp"
#include "hwopt/resource.hpp"

#include "oracles.hpp"
#include "support.hpp"

using namespace hwopt;
using namespace testsup;

TEST_CASE("adder LUT cost is accumulator width plus seven") {
    CHECK(adder_luts(8) == 15);
    CHECK(adder_luts(16) == 23);
    CHECK(adder_luts(1) == 8);
}

TEST_CASE("weight buffer BRAM count") {
    CHECK(weight_buffer_brams(18432, 8, 2) == 8);
    CHECK(weight_buffer_brams(1, 2, 1) == 1);   // rounds up to a whole bank
    CHECK(weight_buffer_brams(0, 8, 4) == 0);   // empty slot needs no banks
    CHECK(weight_buffer_brams(18432, 8, 4) == 8);
    CHECK_THROWS_AS(weight_buffer_brams(-1, 8, 1), InvalidAllocation);
    CHECK_THROWS_AS(weight_buffer_brams(1, 0, 1), InvalidAllocation);
    CHECK_THROWS_AS(weight_buffer_brams(1, 8, 0), InvalidAllocation);
}

TEST_CASE("line buffer BRAM count") {
    CHECK(line_buffer_brams(3584, 8, 3) == 6);
    CHECK(line_buffer_brams(3584, 8, 1) == 0);  // pointwise needs no line cache
    CHECK(line_buffer_brams(18432, 1, 5) == 5);
    CHECK(line_buffer_brams(0, 8, 3) == 0);
    CHECK_THROWS_AS(line_buffer_brams(-1, 8, 3), InvalidAllocation);
}

TEST_CASE("multiplier LUT table") {
    auto t = LutTable::product_default();
    CHECK(t.at(2, 2) == 4);
    CHECK(t.at(8, 8) == 64);
    CHECK(t.at(3, 7) == 21);
    CHECK_NOTHROW(t.check());
    CHECK_THROWS_AS(t.at(1, 8), std::out_of_range);
    CHECK_THROWS_AS(t.at(8, 9), std::out_of_range);

    t.set(5, 5, 9999); // breaks monotonicity in both directions
    CHECK_THROWS_AS(t.check(), ParseError);
}

TEST_CASE("LUT table CSV loading") {
    testsup::TempDir tmp("lut");
    auto path = tmp.path / "t.csv";

    std::string csv = "qw,qa,luts\n";
    for (int w = 2; w <= 8; ++w)
        for (int a = 2; a <= 8; ++a)
            csv += std::to_string(w) + "," + std::to_string(a) + "," +
                   std::to_string(w * a + 1) + "\n";
    write_text_file(path, csv);
    auto t = LutTable::from_csv(path);
    CHECK(t.at(4, 6) == 25);

    write_text_file(path, "qw,qa,luts\n2,2,4\n");
    CHECK_THROWS_AS(LutTable::from_csv(path), ParseError); // 48 entries missing

    csv += "2,2,4\n";
    write_text_file(path, csv);
    CHECK_THROWS_AS(LutTable::from_csv(path), ParseError); // duplicate

    write_text_file(path, "qw,qa,luts\n1,2,4\n");
    CHECK_THROWS_AS(LutTable::from_csv(path), ParseError); // out of range
}

TEST_CASE("per-kernel resources: worked examples") {
    auto table = LutTable::product_default();

    SUBCASE("full conv on DSPs packs two MACs per slice") {
        auto r = kernel_resources(KernelSpec{KernelKind::FullConv, 3},
                                  KernelAllocation{4, 8, MapTarget::Dsp, 4},
                                  SlotQuant{8, 8, 16, 16}, 0, 0, 0, table, true);
        CHECK(r.dsp == 152); // ceil(9*4*8/2) + po
        CHECK(r.luts == 0);
        CHECK(r.bram == 0);
    }
    SUBCASE("depthwise MACs stay unpacked") {
        auto r = kernel_resources(KernelSpec{KernelKind::DepthwiseConv, 3},
                                  KernelAllocation{1, 16, MapTarget::Dsp, 16},
                                  SlotQuant{8, 8, 16, 16}, 0, 0, 0, table, false);
        CHECK(r.dsp == 144); // 9*16
    }
    SUBCASE("LUT mapping charges multiplier plus adder per MAC") {
        auto r = kernel_resources(KernelSpec{KernelKind::FullConv, 1},
                                  KernelAllocation{2, 2, MapTarget::Lut, 2},
                                  SlotQuant{5, 3, 16, 16}, 0, 0, 0, table, false);
        CHECK(r.dsp == 0);
        CHECK(r.luts == 4 * (table.at(3, 5) + 23));
    }
    SUBCASE("buffers and the quantization unit") {
        auto r = kernel_resources(KernelSpec{KernelKind::DepthwiseConv, 3},
                                  KernelAllocation{1, 4, MapTarget::Dsp, 4},
                                  SlotQuant{8, 8, 16, 16}, 1152, 7168, 128, table, true);
        CHECK(r.dsp == 9 * 4 + 4);
        CHECK(r.bram == 4 + 12 + 4); // weights + line buffer + scale buffer
    }
    SUBCASE("depthwise rejects input parallelism") {
        CHECK_THROWS_AS(kernel_resources(KernelSpec{KernelKind::DepthwiseConv, 3},
                                         KernelAllocation{2, 4, MapTarget::Dsp, 4},
                                         SlotQuant{8, 8, 16, 16}, 0, 0, 0, table, true),
                        InvalidAllocation);
    }
    SUBCASE("parallelism factors must be positive") {
        CHECK_THROWS_AS(kernel_resources(KernelSpec{KernelKind::FullConv, 1},
                                         KernelAllocation{0, 1, MapTarget::Dsp, 1},
                                         SlotQuant{8, 8, 16, 16}, 0, 0, 0, table, true),
                        InvalidAllocation);
    }
}

TEST_CASE("per-kernel resources match the straight-line oracle on random inputs") {
    auto table = LutTable::product_default();
    Rng rng(99);
    std::vector<int> pars = {1, 2, 3, 4, 8, 16, 32};
    for (int i = 0; i < 500; ++i) {
        KernelSpec spec;
        spec.kind = rng.chance(0.4) ? KernelKind::DepthwiseConv : KernelKind::FullConv;
        spec.k = rng.chance(0.5) ? 1 : 3;
        KernelAllocation alloc;
        alloc.pi = spec.kind == KernelKind::DepthwiseConv ? 1 : rng.pick(pars);
        alloc.po = rng.pick(pars);
        alloc.map_to = rng.chance(0.5) ? MapTarget::Dsp : MapTarget::Lut;
        alloc.pf = spec.kind == KernelKind::DepthwiseConv ? alloc.po : alloc.pi;
        SlotQuant q{rng.uniform(2, 8), rng.uniform(2, 8), rng.uniform(8, 32),
                    rng.uniform(16, 24)};
        std::int64_t n_w = rng.uniform(0, 200000);
        std::int64_t wc = rng.uniform(0, 100000);
        std::int64_t oc = rng.uniform(0, 2048);
        auto got = kernel_resources(spec, alloc, q, n_w, wc, oc, table, i % 2 == 0);
        auto want = oracle::kernel_resources(spec, alloc, q, n_w, wc, oc, table, i % 2 == 0);
        CAPTURE(i);
        CHECK(got == want);
    }
}

TEST_CASE("network resources: fixture totals and slot-count checks") {
    auto arch = mbv2_fixture();
    auto quant = QuantScheme::uniform(3, 8, 8);
    auto allocs = mbv2_alloc();
    auto r = network_resources(arch, quant, allocs, LutTable::product_default(), true);
    CHECK(r.dsp == kMbv2Dsp);
    CHECK(r.luts == kMbv2Luts);
    CHECK(r.bram == kMbv2Bram);

    allocs.pop_back();
    CHECK_THROWS_AS(network_resources(arch, quant, allocs, LutTable::product_default(), true),
                    InvalidAllocation);
    CHECK_THROWS_AS(network_resources(arch, QuantScheme::uniform(2, 8, 8), mbv2_alloc(),
                                      LutTable::product_default(), true),
                    InvalidAllocation);
}

TEST_CASE("device budgets") {
    auto b = HardwareBudget::zu3eg();
    CHECK(b.t_dsp == 360);
    CHECK(b.t_luts == 70560);
    CHECK(b.t_bram == 432);
    CHECK(b.bw == 64);
    CHECK(b.lut_cap() == 35280);

    b.beta = 1.0;
    CHECK(b.lut_cap() == b.t_luts);
    b.t_luts = 100;
    b.beta = 0.33;
    CHECK(b.lut_cap() == 33);
}

TEST_CASE("device file parsing") {
    testsup::TempDir tmp("dev");
    auto path = tmp.path / "d.toml";
    write_text_file(path,
                    "name = \"test-part\"\nt_dsp = 10\nt_luts = 2000\nt_bram = 6\n"
                    "beta = 0.25\nbw_bits_per_cycle = 32\n");
    auto b = HardwareBudget::from_file(path);
    CHECK(b.t_dsp == 10);
    CHECK(b.lut_cap() == 500);
    CHECK(b.bw == 32);

    write_text_file(path, "t_dsp = 10\nbogus = 1\n");
    CHECK_THROWS_AS(HardwareBudget::from_file(path), ParseError);
    write_text_file(path, "beta = 1.5\n");
    CHECK_THROWS_AS(HardwareBudget::from_file(path), ParseError);
    write_text_file(path, "bw_bits_per_cycle = 0\n");
    CHECK_THROWS_AS(HardwareBudget::from_file(path), ParseError);

    std::string csv = "qw,qa,luts\n";
    for (int w = 2; w <= 8; ++w)
        for (int a = 2; a <= 8; ++a)
            csv += std::to_string(w) + "," + std::to_string(a) + "," +
                   std::to_string(w * a) + "\n";
    write_text_file(tmp.path / "lut.csv", csv);
    write_text_file(path, "lut_table = lut.csv\n"); // relative to the device file
    auto with_table = HardwareBudget::from_file(path);
    CHECK(with_table.lut_table.at(8, 8) == 64);
}
