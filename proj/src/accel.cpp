#include "sqj/accel.hpp"

#include <algorithm>
#include <limits>

namespace sqj {

void AccelConfig::validate() const {
    if (par_fact < 1 || chi_num < 1) throw CapacityError("par_fact and chi_num must be >= 1");
    if (k_max < 1 || wi_x_chi_max < 1 || kxkxchi_max < 1 || q_choxkxkxchi_max < 1 ||
        q_cho_max < 1 || cho_max < 1) {
        throw CapacityError("cache maxima must be >= 1");
    }
    if (dsp_share < 0.0 || dsp_share > 1.0) throw CapacityError("dsp_share must lie in [0, 1]");
}

ConvInvocation make_invocation(const ConvSpec& spec, const QBlob& blob, FxpFormat in_fmt,
                               FxpFormat out_fmt) {
    ConvInvocation inv;
    inv.spec = spec;
    inv.in_fmt = in_fmt;
    inv.out_fmt = out_fmt;
    inv.w_fmt = blob.w_fmt;
    inv.b_fmt = blob.b_fmt;
    return inv;
}

std::vector<std::string> capacity_violations(const ConvInvocation& inv, const AccelConfig& cfg) {
    std::vector<std::string> out;
    auto over = [&out](const char* what, long long v, long long max) {
        if (v > max) {
            out.push_back(std::string(what) + " " + std::to_string(v) + " > " + std::to_string(max));
        }
    };
    const int q_cho = inv.q_cho(cfg.par_fact);
    over("K", inv.spec.kernel, cfg.k_max);
    over("WIxCHI", inv.wi_x_chi(), cfg.wi_x_chi_max);
    over("KxKxCHI", inv.kxkxchi(), cfg.kxkxchi_max);
    over("Q_CHO", q_cho, cfg.q_cho_max);
    over("Q_CHOxKxKxCHI", static_cast<long long>(q_cho) * inv.kxkxchi(), cfg.q_choxkxkxchi_max);
    over("CHO", inv.spec.ch_out, cfg.cho_max);
    return out;
}

void check_capacity(const ConvInvocation& inv, const AccelConfig& cfg) {
    auto v = capacity_violations(inv, cfg);
    if (v.empty()) return;
    std::string msg = "invocation exceeds accelerator caches:";
    for (const auto& s : v) msg += " " + s + ";";
    throw CapacityError(msg);
}

WeightBanks partition_weights(const QBlob& blob, const AccelConfig& cfg) {
    if (!blob.consistent()) throw ShapeError("parameter blob has inconsistent lengths");
    WeightBanks b;
    b.par_fact = cfg.par_fact;
    b.q_cho = ceil_div(blob.co, cfg.par_fact);
    b.kxkxchi = static_cast<int>(blob.kkc());
    b.ch_out = blob.co;
    if (b.q_cho > cfg.q_cho_max ||
        static_cast<long long>(b.q_cho) * b.kxkxchi > cfg.q_choxkxkxchi_max) {
        throw CapacityError("weights for " + std::to_string(blob.co) +
                            " output channels exceed the per-PE weight cache");
    }
    const auto kkc = static_cast<std::size_t>(b.kxkxchi);
    b.weights.assign(static_cast<std::size_t>(cfg.par_fact),
                     std::vector<std::int8_t>(static_cast<std::size_t>(b.q_cho) * kkc, 0));
    b.bias.assign(static_cast<std::size_t>(cfg.par_fact),
                  std::vector<std::int8_t>(static_cast<std::size_t>(b.q_cho), 0));
    for (int co = 0; co < blob.co; ++co) {
        const int pe = co % cfg.par_fact;
        const int q = co / cfg.par_fact;
        std::copy_n(blob.weights.begin() + static_cast<std::ptrdiff_t>(co * kkc), kkc,
                    b.weights[pe].begin() + static_cast<std::ptrdiff_t>(q * kkc));
        b.bias[pe][q] = blob.bias[co];
    }
    return b;
}

// ---------------------------------------------------------------------------

LineBuffer::LineBuffer(int k_max, int width_max)
    : k_max_(k_max),
      width_max_(width_max),
      lines_(static_cast<std::size_t>(k_max) * static_cast<std::size_t>(width_max), 0),
      order_(static_cast<std::size_t>(k_max)) {
    reset(k_max);
}

void LineBuffer::reset(int k) {
    if (k < 1 || k > k_max_) throw CapacityError("line buffer holds at most K_MAX rows");
    k_ = k;
    for (int i = 0; i < k_max_; ++i) order_[i] = i;
}

void LineBuffer::rotate(int n) {
    n %= k_;
    std::rotate(order_.begin(), order_.begin() + n, order_.begin() + k_);
}

std::span<std::int8_t> LineBuffer::row(int logical) {
    return std::span<std::int8_t>(lines_).subspan(
        static_cast<std::size_t>(order_[logical]) * width_max_, static_cast<std::size_t>(width_max_));
}

std::span<const std::int8_t> LineBuffer::row(int logical) const {
    return std::span<const std::int8_t>(lines_).subspan(
        static_cast<std::size_t>(order_[logical]) * width_max_, static_cast<std::size_t>(width_max_));
}

// ---------------------------------------------------------------------------

bool is_real_row(const ConvInvocation& inv, int padded_row) {
    return padded_row >= inv.spec.pad && padded_row < inv.spec.pad + inv.spec.h_in;
}

RowLoad plan_row_load(const ConvInvocation& inv, int ho) {
    const int k = inv.spec.kernel;
    const int s = inv.spec.stride;
    RowLoad plan;
    const int last = ho * s + k;  // one past the window's last padded row
    int first_new = 0;
    if (ho > 0) {
        const int prev_end = (ho - 1) * s + k;
        first_new = std::max(prev_end, ho * s);
        for (int r = prev_end; r < ho * s; ++r) plan.skipped_real_rows += is_real_row(inv, r);
        plan.rotate_by = s % k;
    }
    for (int r = first_new; r + 1 < last; ++r) plan.full_rows.push_back(r);
    plan.incremental_row = last - 1;
    return plan;
}

int trailing_real_rows(const ConvInvocation& inv) {
    int n = 0;
    for (int r = (inv.spec.h_out() - 1) * inv.spec.stride + inv.spec.kernel;
         r < inv.padded_height(); ++r) {
        n += is_real_row(inv, r);
    }
    return n;
}

// ---------------------------------------------------------------------------

std::int8_t InputStream::read() {
    if (next_ >= data_.size()) throw std::logic_error("input stream read past the end");
    return data_[next_++];
}

void InputStream::discard(std::size_t n) {
    if (next_ + n > data_.size()) throw std::logic_error("input stream discard past the end");
    next_ += n;
    discarded_ += static_cast<std::int64_t>(n);
}

// ---------------------------------------------------------------------------

PoolUnit::PoolUnit(Shape in, PoolSpec pool)
    : in_(in), pool_(pool), out_shape_(pool.out_shape(in)), out_(pool.out_shape(in)) {
    if (pool.kernel < 1 || pool.stride < 1 || pool.pad < 0 || pool.pad >= pool.kernel) {
        throw ShapeError("invalid pool geometry");
    }
    ring_.assign(static_cast<std::size_t>(pool.kernel),
                 std::vector<std::int8_t>(static_cast<std::size_t>(in.w) * in.c, 0));
}

int PoolUnit::last_needed_row(int ph) const {
    return std::min(ph * pool_.stride - pool_.pad + pool_.kernel - 1, in_.h - 1);
}

void PoolUnit::push_row(int r, std::span<const std::int8_t> row) {
    std::copy(row.begin(), row.end(), ring_[static_cast<std::size_t>(r % pool_.kernel)].begin());
    while (next_out_row_ < out_shape_.h && last_needed_row(next_out_row_) <= r) {
        const int ph = next_out_row_++;
        const int h0 = std::max(0, ph * pool_.stride - pool_.pad);
        const int h1 = last_needed_row(ph);
        for (int pw = 0; pw < out_shape_.w; ++pw) {
            const int w0 = std::max(0, pw * pool_.stride - pool_.pad);
            const int w1 = std::min(pw * pool_.stride - pool_.pad + pool_.kernel - 1, in_.w - 1);
            auto dst = out_.pixel(ph, pw);
            std::fill(dst.begin(), dst.end(), std::numeric_limits<std::int8_t>::lowest());
            for (int h = h0; h <= h1; ++h) {
                const auto& line = ring_[static_cast<std::size_t>(h % pool_.kernel)];
                for (int w = w0; w <= w1; ++w) {
                    for (int c = 0; c < in_.c; ++c) {
                        dst[c] = std::max(dst[c], line[static_cast<std::size_t>(w) * in_.c + c]);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------

ConvEngine::ConvEngine(const AccelConfig& cfg) : cfg_(cfg), linebuf_(cfg.k_max, cfg.wi_x_chi_max) {
    cfg_.validate();
    weights_.assign(static_cast<std::size_t>(cfg.par_fact),
                    std::vector<std::int8_t>(static_cast<std::size_t>(cfg.q_choxkxkxchi_max), 0));
    bias_.assign(static_cast<std::size_t>(cfg.par_fact),
                 std::vector<std::int8_t>(static_cast<std::size_t>(cfg.q_cho_max), 0));
    for (auto& w : win_) w.assign(static_cast<std::size_t>(cfg.kxkxchi_max), 0);
    for (auto& p : out_pix_) p.assign(static_cast<std::size_t>(cfg.cho_max), 0);
}

std::span<const std::int8_t> ConvEngine::window(int win) const {
    return std::span<const std::int8_t>(win_[win]).first(static_cast<std::size_t>(inv_.kxkxchi()));
}

std::span<const std::int8_t> ConvEngine::out_pixel(int out_pix) const {
    return std::span<const std::int8_t>(out_pix_[out_pix])
        .first(static_cast<std::size_t>(inv_.spec.ch_out));
}

void ConvEngine::load(const ConvInvocation& inv, const WeightBanks& banks) {
    check_capacity(inv, cfg_);
    if (banks.par_fact != cfg_.par_fact || banks.kxkxchi != inv.kxkxchi() ||
        banks.ch_out != inv.spec.ch_out) {
        throw ShapeError("weight banks do not match the invocation");
    }
    inv_ = inv;
    banks_ = &banks;
    // init_caches: copy every bank into its PE-local cache.
    for (int p = 0; p < cfg_.par_fact; ++p) {
        std::copy(banks.weights[p].begin(), banks.weights[p].end(), weights_[p].begin());
        std::copy(banks.bias[p].begin(), banks.bias[p].end(), bias_[p].begin());
    }
    linebuf_.reset(inv.spec.kernel);
    win_target_[0] = win_target_[1] = -1;
    pix_col_[0] = pix_col_[1] = -1;
}

void ConvEngine::load_codes(InputStream& in, int logical_row, int padded_row, int col_begin,
                            int col_end) {
    const auto& s = inv_.spec;
    auto line = linebuf_.row(logical_row);
    const bool real_row = is_real_row(inv_, padded_row);
    for (int col = col_begin; col < col_end; ++col) {
        const bool real = real_row && col >= s.pad && col < s.pad + s.w_in;
        std::int8_t* dst = line.data() + static_cast<std::size_t>(col) * s.ch_in;
        for (int ci = 0; ci < s.ch_in; ++ci) {
            if (real) {
                dst[ci] = in.read();
                ++stats_.input_reads;
            } else {
                dst[ci] = 0;
                ++stats_.padding_codes;
            }
        }
    }
}

void ConvEngine::shift_linebuf(InputStream& in, int ho) {
    const auto& s = inv_.spec;
    const RowLoad plan = plan_row_load(inv_, ho);
    if (ho == 0) {
        linebuf_.reset(s.kernel);
    } else {
        linebuf_.rotate(plan.rotate_by);
    }
    const auto skipped = static_cast<std::size_t>(plan.skipped_real_rows) * s.w_in * s.ch_in;
    in.discard(skipped);
    stats_.input_reads += static_cast<std::int64_t>(skipped);
    stats_.input_discards += static_cast<std::int64_t>(skipped);

    const int fresh = static_cast<int>(plan.full_rows.size()) + 1;
    const int first_logical = s.kernel - fresh;
    for (int i = 0; i < static_cast<int>(plan.full_rows.size()); ++i) {
        load_codes(in, first_logical + i, plan.full_rows[i], 0, inv_.padded_width());
    }
    // Prime the last line with K pixels; the rest streams in per output pixel.
    incremental_logical_ = s.kernel - 1;
    incremental_padded_ = plan.incremental_row;
    load_codes(in, incremental_logical_, incremental_padded_, 0, s.kernel);
    lb_pixel_pt_ = inv_.kx_chi();
    ho_ = ho;
    stats_.rows_loaded.push_back(fresh);
}

void ConvEngine::init_linebuf_win(int win) {
    const int kxchi = inv_.kx_chi();
    for (int kh = 0; kh < inv_.spec.kernel; ++kh) {
        auto line = linebuf_.row(kh);
        std::copy_n(line.begin(), kxchi, win_[win].begin() + kh * kxchi);
    }
    win_target_[win] = 0;
}

void ConvEngine::update_linebuf_win(InputStream& in, int win, int& pixel_iwp, int wo) {
    const auto& s = inv_.spec;
    const int w_out = s.w_out();
    const int ch = s.ch_in;
    ++stats_.update_calls;

    // Stream SxCHI codes into the last line; the final call of the row
    // drains whatever the windows never touch.
    const int col_begin = lb_pixel_pt_ / ch;
    const int col_end = wo + 1 == w_out ? inv_.padded_width()
                                        : std::min(inv_.padded_width(), col_begin + s.stride);
    const auto before = stats_.input_reads;
    if (col_end > col_begin) {
        load_codes(in, incremental_logical_, incremental_padded_, col_begin, col_end);
        lb_pixel_pt_ = col_end * ch;
    }
    stats_.update_codes.push_back(static_cast<int>(stats_.input_reads - before));

    // Refill the idle window for the next output pixel.
    if (wo + 1 < w_out) {
        const int kxchi = inv_.kx_chi();
        for (int kh = 0; kh < s.kernel; ++kh) {
            auto line = linebuf_.row(kh);
            std::copy_n(line.begin() + pixel_iwp, kxchi, win_[win].begin() + kh * kxchi);
        }
        win_target_[win] = wo + 1;
        pixel_iwp += 2 * inv_.sx_chi();
    }
}

void ConvEngine::pixel_calc(int win, int out_pix) {
    const int kkc = inv_.kxkxchi();
    const int acc_frac = inv_.acc_frac();
    const auto& w = win_[win];
    const int q_cho = inv_.q_cho(cfg_.par_fact);
    for (int pe = 0; pe < cfg_.par_fact; ++pe) {
        const auto& wbank = weights_[pe];
        for (int q = 0; q < q_cho; ++q) {
            const int co = q * cfg_.par_fact + pe;
            if (co >= inv_.spec.ch_out) continue;  // zero-padded slot, never written
            Accum acc = align_bias(bias_[pe][q], inv_.b_fmt, acc_frac);
            const std::int8_t* wq = wbank.data() + static_cast<std::size_t>(q) * kkc;
            for (int i = 0; i < kkc; ++i) acc = mac(acc, w[i], wq[i]);
            out_pix_[out_pix][co] = static_cast<std::int8_t>(requantize(acc, inv_.out_fmt));
            stats_.macs += kkc;
        }
    }
    pix_col_[out_pix] = win_target_[win];
    ++stats_.pixel_calcs;
}

void ConvEngine::write_back(int out_pix, int wo) {
    if (wo == 0) return;
    const int col = wo - 1;
    if (pix_col_[out_pix] != col) ++stats_.parity_violations;
    const int cho = inv_.spec.ch_out;
    const bool relu = inv_.spec.use_relu;
    std::int8_t* dst = row_out_.data() + static_cast<std::size_t>(col) * cho;
    for (int co = 0; co < cho; ++co) {
        const std::int8_t v = out_pix_[out_pix][co];
        dst[co] = relu ? relu_code(v) : v;
    }
    stats_.output_writes += cho;
    ++stats_.write_coverage[static_cast<std::size_t>(ho_) * inv_.spec.w_out() + col];
}

QMap ConvEngine::run(const ConvInvocation& inv, const QMap& in, const WeightBanks& banks,
                     AccelStats* stats) {
    const auto& s = inv.spec;
    s.validate();
    if (!(in.shape() == s.in_shape())) {
        throw ShapeError("accelerator input is " + in.shape().str() + ", invocation expects " +
                         s.in_shape().str());
    }
    load(inv, banks);
    stats_ = AccelStats{};
    const int h_out = s.h_out();
    const int w_out = s.w_out();
    stats_.write_coverage.assign(static_cast<std::size_t>(h_out) * w_out, 0);

    QMap conv_out;
    std::optional<PoolUnit> pool;
    if (s.fused_pool) {
        pool.emplace(s.conv_shape(), *s.fused_pool);
    } else {
        conv_out = QMap(s.conv_shape(), inv.out_fmt);
    }

    InputStream stream(in.data());
    row_out_.assign(static_cast<std::size_t>(w_out) * s.ch_out, 0);

    for (int ho = 0; ho != h_out; ++ho) {  // L_H_OUT
        shift_linebuf(stream, ho);
        init_linebuf_win(0);
        int pixel_iwp0 = inv.sx_chi() << 1;
        int pixel_iwp1 = inv.sx_chi();
        for (int wo = 0; wo != w_out; ++wo) {  // L_W_OUT
            const int active = wo % 2 == 0 ? 0 : 1;
            if (win_target_[active] != wo) ++stats_.parity_violations;
            if (active == 0) {
                pixel_calc(0, 0);
                update_linebuf_win(stream, 1, pixel_iwp1, wo);
                write_back(1, wo);
            } else {
                pixel_calc(1, 1);
                update_linebuf_win(stream, 0, pixel_iwp0, wo);
                write_back(0, wo);
            }
        }
        // Leftover pixel from the last iteration.
        if (w_out % 2 == 0) {
            write_back(1, w_out);
        } else {
            write_back(0, w_out);
        }

        if (pool) {
            pool->push_row(ho, row_out_);
        } else {
            std::copy(row_out_.begin(), row_out_.end(), conv_out.pixel(ho, 0).begin());
        }
    }

    const auto trailing =
        static_cast<std::size_t>(trailing_real_rows(inv)) * s.w_in * s.ch_in;
    stream.discard(trailing);
    stats_.input_reads += static_cast<std::int64_t>(trailing);
    stats_.input_discards += static_cast<std::int64_t>(trailing);
    if (!stream.exhausted()) throw std::logic_error("accelerator schedule left input unread");

    if (stats) *stats = stats_;
    if (pool) {
        QMap out = pool->take();
        out.set_fmt(inv.out_fmt);
        return out;
    }
    return conv_out;
}

QMap accel_conv(const ConvInvocation& inv, const QMap& in, const WeightBanks& banks,
                const AccelConfig& cfg, AccelStats* stats) {
    check_capacity(inv, cfg);
    ConvEngine engine(cfg);
    return engine.run(inv, in, banks, stats);
}

QMap accel_maxpool(const QMap& in, const PoolSpec& pool) {
    PoolUnit unit(in.shape(), pool);
    for (int r = 0; r < in.height(); ++r) {
        unit.push_row(r, std::span<const std::int8_t>(in.data()).subspan(
                             static_cast<std::size_t>(r) * in.width() * in.channels(),
                             static_cast<std::size_t>(in.width()) * in.channels()));
    }
    QMap out = unit.take();
    out.set_fmt(in.fmt());
    return out;
}

}  // namespace sqj
