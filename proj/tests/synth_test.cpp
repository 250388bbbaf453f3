#include <cardiodg/dataio.hpp>
#include <cardiodg/synth.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace {

using namespace cardiodg;
namespace fs = std::filesystem;

constexpr std::array kAll{ArrhythmiaClass::N,    ArrhythmiaClass::AF,   ArrhythmiaClass::PAC, ArrhythmiaClass::PVC,
                          ArrhythmiaClass::LBBB, ArrhythmiaClass::RBBB, ArrhythmiaClass::IAVB};

/// Threshold classifier over measured beat properties. It never sees the label.
ArrhythmiaClass margin_oracle(const synth::SyntheticRecord &s)
{
    const double normal_qrs = synth::sinus_beat().qrs_width();
    std::size_t ectopic = 0, wide_ectopic = 0;
    double p_max = 0;
    std::vector<double> qrs, pr;
    double v1 = 0, v6 = 0;
    for (const auto &b : s.beats) {
        p_max = std::max(p_max, std::abs(b.p_amp));
        if (b.ectopic) {
            ++ectopic;
            if (b.qrs_width >= 1.5 * normal_qrs)
                ++wide_ectopic;
            continue;
        }
        qrs.push_back(b.qrs_width);
        pr.push_back(b.pr_interval);
        v1 += b.v1_sign;
        v6 += b.v6_sign;
    }
    if (p_max == 0 && synth::rr_cov(s.beats) >= 0.15)
        return ArrhythmiaClass::AF;
    if (ectopic > 0)
        return 2 * wide_ectopic > ectopic ? ArrhythmiaClass::PVC : ArrhythmiaClass::PAC;
    std::sort(qrs.begin(), qrs.end());
    std::sort(pr.begin(), pr.end());
    if (qrs[qrs.size() / 2] >= 1.5 * normal_qrs && v1 * v6 < 0)
        return v1 < 0 ? ArrhythmiaClass::LBBB : ArrhythmiaClass::RBBB;
    if (pr[pr.size() / 2] >= 0.22)
        return ArrhythmiaClass::IAVB;
    return ArrhythmiaClass::N;
}

TEST(GenerateRecord, ShapeLabelDomainAndRate)
{
    const auto prof = synth::default_domains()[0];
    std::mt19937_64 rng(1);
    const auto s = synth::generate_annotated(synth::default_rule(ArrhythmiaClass::N), prof, 10, 500, rng);
    EXPECT_EQ(s.record.leads.n_leads, 12u);
    EXPECT_EQ(s.record.leads.n_samples, 5000u);
    EXPECT_EQ(s.record.label, ArrhythmiaClass::N);
    EXPECT_EQ(s.record.domain, prof.name);
    EXPECT_NO_THROW(s.record.validate());
    // Beat count near 10 s / RR mean (per-record rate varies by ~10%).
    const double expected = 10.0 / (synth::default_rule(ArrhythmiaClass::N).rr_mean * prof.rate_scale);
    EXPECT_NEAR(double(s.beats.size()), expected, 0.35 * expected);
}

TEST(GenerateRecord, BitIdenticalUnderSameSeed)
{
    for (auto c : kAll) {
        std::mt19937_64 a(77), b(77);
        const auto prof = synth::default_domains()[3];
        EXPECT_EQ(synth::generate_record(synth::default_rule(c), prof, 10, 500, a).leads,
                  synth::generate_record(synth::default_rule(c), prof, 10, 500, b).leads);
    }
}

TEST(GenerateRecord, ClassRulesHoldOnEveryRecord)
{
    const double normal_qrs = synth::sinus_beat().qrs_width();
    std::mt19937_64 rng(11);
    for (const auto &prof : synth::default_domains())
        for (auto c : kAll)
            for (int k = 0; k < 5; ++k) {
                const auto s = synth::generate_annotated(synth::default_rule(c), prof, 10, 500, rng);
                switch (c) {
                case ArrhythmiaClass::AF:
                    for (const auto &b : s.beats)
                        EXPECT_EQ(b.p_amp, 0.0);
                    EXPECT_GE(synth::rr_cov(s.beats), 0.15);
                    break;
                case ArrhythmiaClass::IAVB:
                    for (const auto &b : s.beats)
                        EXPECT_GE(b.pr_interval, 0.22);
                    break;
                case ArrhythmiaClass::LBBB:
                case ArrhythmiaClass::RBBB:
                    for (const auto &b : s.beats) {
                        EXPECT_GE(b.qrs_width, 1.5 * normal_qrs);
                        EXPECT_LT(b.v1_sign * b.v6_sign, 0.0);
                    }
                    break;
                case ArrhythmiaClass::PVC:
                case ArrhythmiaClass::PAC: {
                    std::size_t early = 0;
                    for (const auto &b : s.beats)
                        if (b.ectopic) {
                            ++early;
                            if (c == ArrhythmiaClass::PVC)
                                EXPECT_GE(b.qrs_width, 1.5 * normal_qrs);
                            else
                                EXPECT_LT(b.qrs_width, 1.2 * normal_qrs);
                        }
                    EXPECT_GT(early, 0u);
                    break;
                }
                default:
                    break;
                }
            }
}

TEST(GenerateRecord, PreconditionsAndProfileValidation)
{
    std::mt19937_64 rng(1);
    EXPECT_THROW(synth::generate_record(synth::default_rule(ArrhythmiaClass::N), {}, 1.0, 500, rng), Error);
    synth::DomainProfile bad;
    bad.gain = 0;
    EXPECT_THROW(synth::generate_record(synth::default_rule(ArrhythmiaClass::N), bad, 10, 500, rng), Error);
    bad = {};
    bad.noise_mv = -0.1;
    EXPECT_THROW(bad.validate(), Error);
    synth::ClassRule rule = synth::default_rule(ArrhythmiaClass::N);
    rule.rr_mean = 0.25;
    EXPECT_THROW(synth::generate_record(rule, {}, 10, 500, rng), Error);
}

double mean_lead_variance(const synth::DomainProfile &p, std::uint64_t seed, int n)
{
    double acc = 0;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        const auto r = synth::generate_record(synth::default_rule(kAll[std::size_t(i) % kAll.size()]), p, 10, 500, rng);
        for (std::size_t l = 0; l < r.leads.n_leads; ++l) {
            double s = 0, s2 = 0;
            for (float v : r.leads.lead(l)) {
                s += v;
                s2 += double(v) * v;
            }
            const double m = s / double(r.leads.n_samples);
            acc += s2 / double(r.leads.n_samples) - m * m;
        }
    }
    return acc / double(n * 12);
}

TEST(DomainShift, VarianceScalesWithGainSquared)
{
    synth::DomainProfile lo = synth::default_domains()[0], hi = lo;
    hi.gain = 2.0 * lo.gain;
    const double ratio = mean_lead_variance(hi, 101, 140) / mean_lead_variance(lo, 202, 140);
    EXPECT_NEAR(ratio, 4.0, 0.4);
}

TEST(Separability, MarginOracleAtLeast95Percent)
{
    std::size_t correct = 0, total = 0;
    std::mt19937_64 rng(2024);
    for (const auto &prof : synth::default_domains())
        for (auto c : kAll)
            for (int k = 0; k < 15; ++k) {
                const auto s = synth::generate_annotated(synth::default_rule(c), prof, 10, 500, rng);
                correct += margin_oracle(s) == c;
                ++total;
            }
    EXPECT_GE(double(correct) / double(total), 0.95) << correct << "/" << total;
}

TEST(ClassMix, LargestRemainderCounts)
{
    synth::ClassMix mix{0.68, 0.12, 0.05, 0.05, 0.04, 0.03, 0.03};
    const auto counts = synth::largest_remainder(mix, 200);
    EXPECT_EQ(counts[0], 136u);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), 200u);
    const auto ref = synth::largest_remainder(synth::reference_class_mix(), 200);
    EXPECT_EQ(std::accumulate(ref.begin(), ref.end(), std::size_t{0}), 200u);
    // Remainders .5/.5/.0 on 3 items -> the lower index wins the tie.
    const auto tie = synth::largest_remainder({0.5, 0.5, 0, 0, 0, 0, 0}, 3);
    EXPECT_EQ(tie[0], 2u);
    EXPECT_EQ(tie[1], 1u);
    try {
        synth::largest_remainder({0.5, 0.4, 0, 0, 0, 0, 0}, 10);
        FAIL();
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("sum to 1"), std::string::npos);
    }
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

TEST(GenerateDataset, CountsValidityAndByteDeterminism)
{
    const fs::path root = fs::temp_directory_path() / ("cardiodg_synth_" + std::to_string(::getpid()));
    fs::remove_all(root);
    synth::DatasetSpec spec;
    spec.n_per_domain = 25;
    spec.class_mix = {0.68, 0.12, 0.05, 0.05, 0.04, 0.03, 0.03};
    const auto m1 = synth::generate_dataset(spec, root / "a");
    synth::generate_dataset(spec, root / "b");
    ASSERT_EQ(m1.records.size(), 100u);
    const auto expected = synth::largest_remainder(spec.class_mix, 25);
    for (const auto &dom : spec.domains) {
        std::array<std::size_t, kNumClasses> seen{};
        for (const auto &e : m1.records)
            if (e.domain == dom.name)
                ++seen[static_cast<std::size_t>(e.label)];
        EXPECT_EQ(seen, expected) << dom.name;
    }
    std::size_t files = 0;
    for (const auto &ent : fs::recursive_directory_iterator(root / "a")) {
        if (!ent.is_regular_file())
            continue;
        ++files;
        const auto rel = fs::relative(ent.path(), root / "a");
        EXPECT_EQ(slurp(ent.path()), slurp(root / "b" / rel)) << rel;
    }
    EXPECT_EQ(files, 101u);
    const auto loaded = load_manifest(root / "a" / "manifest.json");
    for (const auto &e : loaded.records)
        EXPECT_NO_THROW(load_record(loaded, e).validate());
    fs::remove_all(root);
}

} // namespace
