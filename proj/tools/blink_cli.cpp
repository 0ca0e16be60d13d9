// Command-line front end for tree files: create, load, query, audit, stress.
//
// Exit codes: 0 success, 1 not found (get/del miss), 2 usage error,
// 3 corruption or audit failure.

#include <CLI11.hpp>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

#include "blink/blink_tree.hpp"
#include "blink/errors.hpp"
#include "blink/verifier.hpp"

using namespace blink;

namespace {

std::string decode_hex(const std::string& s) {
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw CLI::ValidationError("--hex", "invalid hex digit");
    };
    if (s.size() % 2) throw CLI::ValidationError("--hex", "odd hex length");
    std::string out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2)
        out.push_back(char(nib(s[i]) << 4 | nib(s[i + 1])));
    return out;
}

std::string encode_hex(std::string_view s) {
    static const char* d = "0123456789abcdef";
    std::string out;
    for (unsigned char c : s) {
        out.push_back(d[c >> 4]);
        out.push_back(d[c & 15]);
    }
    return out;
}

// Values are 64-bit; the CLI treats them as byte strings of up to 8
// characters packed little-endian, so `put k hello` round-trips as text.
Value pack_value(const std::string& s) {
    if (s.size() > 8) throw CLI::ValidationError("value", "values are at most 8 bytes");
    Value v = 0;
    for (size_t i = 0; i < s.size(); ++i) v |= Value(uint8_t(s[i])) << (8 * i);
    return v;
}

std::string unpack_value(Value v) {
    std::string s;
    for (int i = 0; i < 8; ++i) {
        char c = char(v >> (8 * i));
        if (c) s.push_back(c);
    }
    bool printable = !s.empty();
    for (size_t i = 0; i < 8 && printable; ++i) {
        char c = char(v >> (8 * i));
        if (c == 0) {
            // NULs only as trailing padding
            for (int j = int(i); j < 8; ++j)
                if (char(v >> (8 * j))) printable = false;
            break;
        }
        if (!std::isprint(static_cast<unsigned char>(c))) printable = false;
    }
    if (printable) return s;
    return std::to_string(v);  // binary payload: fall back to decimal
}

struct Ctx {
    std::string file;
    bool hex = false;
    bool no_access_intent = false;
    size_t cache = kDefaultCachePages;

    std::string key(const std::string& raw) const { return hex ? decode_hex(raw) : raw; }
    std::string show_key(std::string_view k) const {
        return hex ? encode_hex(k) : std::string(k);
    }

    std::unique_ptr<BlinkTree> open() const {
        TreeOptions opts;
        opts.access_intent_enabled = !no_access_intent;
        opts.cache_pages = cache;
        return BlinkTree::open(file, opts);
    }
};

void add_common(CLI::App* cmd, Ctx& ctx, bool with_hex = true) {
    cmd->add_option("--file", ctx.file, "tree file")->required();
    if (with_hex) cmd->add_flag("--hex", ctx.hex, "keys are hex-encoded byte strings");
    cmd->add_flag("--no-access-intent", ctx.no_access_intent,
                  "disable the AccessIntent coupling latch (pages leak)");
    cmd->add_option("--cache", ctx.cache, "page cache capacity in pages");
}

int do_scan(BlinkTree& tree, const Ctx& ctx, const std::optional<std::string>& low,
            const std::optional<std::string>& high) {
    // half-open interval [low, high)
    tree.scan(low, high, /*high_inclusive=*/false, [&](std::string_view k, Value v) {
        std::cout << ctx.show_key(k) << '\t' << unpack_value(v) << '\n';
        return true;
    });
    return 0;
}

int do_dump_node(BlinkTree& tree, PageNum page) {
    Node n = tree.read_node(page);
    std::cout << "page " << page << '\n'
              << "level " << n.level() << '\n'
              << "deleted " << (n.deleted() ? 1 : 0) << '\n'
              << "count " << n.count() << '\n'
              << "active " << n.active() << '\n'
              << "link " << n.link() << '\n'
              << "free_offset " << n.free_offset() << '\n';
    for (uint16_t s = 0; s < n.count(); ++s) {
        KeyRef k = n.key(s);
        std::cout << "slot " << s << " key " << (k.infinite ? "+inf" : encode_hex(k.bytes))
                  << " deleted " << (n.key_deleted(s) ? 1 : 0) << " value " << n.value(s)
                  << '\n';
    }
    return 0;
}

int do_stats(BlinkTree& tree) {
    auto st = tree.store().stats();
    auto lc = tree.latches().counters();
    auto tc = tree.counters();
    std::cout << "height=" << tree.height() << '\n'
              << "top_page=" << tree.store().top_page() << '\n'
              << "free_pages=" << tree.store().free_list().size() << '\n'
              << "splits=" << tc.splits << '\n'
              << "root_splits=" << tc.root_splits << '\n'
              << "consolidations=" << tc.consolidations << '\n'
              << "page_reads=" << st.reads << '\n'
              << "page_writes=" << st.writes << '\n'
              << "cache_hits=" << st.cache_hits << '\n'
              << "allocs=" << st.allocs << '\n'
              << "allocs_from_free_list=" << st.allocs_from_free_list << '\n'
              << "frees=" << st.frees << '\n';
    for (size_t k = 0; k < kLatchKinds; ++k) {
        const char* name = latch_kind_name(LatchKind(k));
        std::cout << "latch_" << name << "_acquisitions=" << lc.acquisitions[k] << '\n'
                  << "latch_" << name << "_waits=" << lc.waits[k] << '\n';
    }
    std::cout << "exclusive_overlap_anomalies=" << tree.latches().exclusive_overlap_anomalies()
              << '\n';
    return 0;
}

int do_load(BlinkTree& tree, const Ctx& ctx, const std::string& input) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (input != "-") {
        file.open(input);
        if (!file) {
            std::cerr << "cannot open " << input << '\n';
            return 2;
        }
        in = &file;
    }
    std::string line;
    size_t n = 0;
    while (std::getline(*in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        std::string key = line.substr(0, tab);
        std::string val = tab == std::string::npos ? std::string() : line.substr(tab + 1);
        tree.put(ctx.key(key), pack_value(val));
        ++n;
    }
    std::cerr << "loaded " << n << " record(s)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"persistent concurrent B-link tree tool"};
    app.require_subcommand(1);
    Ctx ctx;

    uint32_t page_bits = 12;
    auto* c_create = app.add_subcommand("create", "create a new tree file");
    c_create->add_option("--file", ctx.file, "tree file")->required();
    c_create->add_option("--page-bits", page_bits, "log2 of the page size, 9..20");

    std::string arg_key, arg_value;
    auto* c_put = app.add_subcommand("put", "insert or update one key");
    add_common(c_put, ctx);
    c_put->add_option("key", arg_key)->required();
    c_put->add_option("value", arg_value)->required();

    auto* c_get = app.add_subcommand("get", "look up one key");
    add_common(c_get, ctx);
    c_get->add_option("key", arg_key)->required();

    auto* c_del = app.add_subcommand("del", "delete one key");
    add_common(c_del, ctx);
    c_del->add_option("key", arg_key)->required();

    std::string opt_low, opt_high;
    auto* c_scan = app.add_subcommand("scan", "list keys in [low, high), tab-separated");
    add_common(c_scan, ctx);
    c_scan->add_option("--low", opt_low, "inclusive lower bound");
    c_scan->add_option("--high", opt_high, "exclusive upper bound");

    std::string load_input = "-";
    auto* c_load = app.add_subcommand("load", "bulk load records, one `key[TAB value]` per line");
    add_common(c_load, ctx);
    c_load->add_option("input", load_input, "input file, - for stdin");

    PageNum dump_page = 0;
    auto* c_dump = app.add_subcommand("dump-node", "print one node's header and slots");
    add_common(c_dump, ctx, /*with_hex=*/false);
    c_dump->add_option("page", dump_page)->required();

    auto* c_audit = app.add_subcommand("audit", "run the structural audit");
    add_common(c_audit, ctx, /*with_hex=*/false);

    StressOptions sopts;
    std::string mix = "40/20/35/5";
    auto* c_stress = app.add_subcommand("stress", "multi-threaded randomized workload");
    add_common(c_stress, ctx, /*with_hex=*/false);
    c_stress->add_option("--workers", sopts.workers, "worker thread count");
    c_stress->add_option("--ops", sopts.ops_per_worker, "operations per worker");
    c_stress->add_option("--seed", sopts.seed, "deterministic seed");
    c_stress->add_option("--keys", sopts.keys_per_worker, "keys per worker partition");
    c_stress->add_option("--mix", mix, "put/remove/get/scan percentages, e.g. 40/20/35/5");

    auto* c_stats = app.add_subcommand("stats", "print key=value statistics");
    add_common(c_stats, ctx, /*with_hex=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // --help exits 0, anything else is usage
    }

    try {
        if (c_create->parsed()) {
            BlinkTree::create(ctx.file, PageConfig{page_bits});
            return 0;
        }
        if (c_stress->parsed()) {
            if (std::sscanf(mix.c_str(), "%d/%d/%d/%d", &sopts.mix.put_pct,
                            &sopts.mix.remove_pct, &sopts.mix.get_pct,
                            &sopts.mix.scan_pct) != 4 ||
                sopts.mix.put_pct + sopts.mix.remove_pct + sopts.mix.get_pct +
                        sopts.mix.scan_pct !=
                    100) {
                std::cerr << "--mix must be four percentages summing to 100\n";
                return 2;
            }
            auto tree = ctx.open();
            auto result = stress(*tree, sopts);
            std::cout << result.report.to_text();
            std::cout << "ops_per_second=" << uint64_t(result.ops_per_second) << '\n';
            for (auto& m : result.mismatches) std::cerr << "mismatch: " << m << '\n';
            return result.passed() ? 0 : 3;
        }

        auto tree = ctx.open();
        if (c_put->parsed()) {
            tree->put(ctx.key(arg_key), pack_value(arg_value));
            return 0;
        }
        if (c_get->parsed()) {
            auto v = tree->get(ctx.key(arg_key));
            if (!v) return 1;
            std::cout << unpack_value(*v) << '\n';
            return 0;
        }
        if (c_del->parsed()) return tree->remove(ctx.key(arg_key)) ? 0 : 1;
        if (c_scan->parsed()) {
            std::optional<std::string> low, high;
            if (c_scan->count("--low")) low = ctx.key(opt_low);
            if (c_scan->count("--high")) high = ctx.key(opt_high);
            return do_scan(*tree, ctx, low, high);
        }
        if (c_load->parsed()) return do_load(*tree, ctx, load_input);
        if (c_dump->parsed()) return do_dump_node(*tree, dump_page);
        if (c_audit->parsed()) {
            auto rep = audit(*tree, /*quiesced=*/true);
            std::cout << rep.to_text();
            return rep.passed() ? 0 : 3;
        }
        if (c_stats->parsed()) return do_stats(*tree);
    } catch (const CorruptionError& e) {
        std::cerr << "corruption: " << e.what() << '\n';
        return 3;
    } catch (const ProtocolViolation& e) {
        std::cerr << "protocol violation: " << e.what() << '\n';
        return 3;
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    return 2;
}
