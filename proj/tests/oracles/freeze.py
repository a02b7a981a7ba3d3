"""Independent high-precision reference values for the C++ tests.

Run: python3 tests/oracles/freeze.py
Each value is computed from first principles with mpmath (50 digits) and
pasted into the tests as a literal.
"""
import mpmath as mp

mp.mp.dps = 50
KB_H = mp.mpf("20.84")  # GHz/K


def boltzmann(t, fs):
    e = [mp.mpf(0)]
    for f in fs:
        e.append(e[-1] + mp.mpf(f))
    w = [mp.e ** (-x / (KB_H * t)) for x in e]
    z = sum(w)
    return [x / z for x in w], e


def qcrb_var(t, fs, n):
    p, e = boltzmann(t, fs[: n - 1])
    kt = KB_H * t
    x = [v / kt for v in e]
    m = sum(pi * xi for pi, xi in zip(p, x))
    var = sum(pi * (xi - m) ** 2 for pi, xi in zip(p, x))
    return 1 / mp.sqrt(var)


def populations_h(t, g1, g2, g3):
    # Sequential chain h -> f -> e -> g by matrix exponential.
    q = mp.matrix([[0, g1, 0, 0], [0, -g1, g2, 0], [0, 0, -g2, g3], [0, 0, 0, -g3]])
    return mp.expm(q * t) * mp.matrix([0, 0, 0, 1])


def short_condition(f, z0, vp, lf, xs, ls, cg):
    w = 2 * mp.pi * f
    beta = w / vp
    a = beta * xs
    b = beta * (lf - xs)
    # ABCD cascade: line(xs) * series L * line(lf - xs), load = shunt C_g.
    def line(theta):
        return mp.matrix([[mp.cos(theta), 1j * z0 * mp.sin(theta)], [1j * mp.sin(theta) / z0, mp.cos(theta)]])
    m = line(a) * mp.matrix([[1, 1j * w * ls], [0, 1]]) * line(b)
    y_load = 1j * w * cg
    return mp.re(m[0, 0] + m[0, 1] * y_load)


def filter_freq(z0, vp, lf, xs, ls, cg):
    f0 = vp / (4 * lf)
    return mp.findroot(lambda f: short_condition(f, z0, vp, lf, xs, ls, cg), f0 * 0.98)


def main():
    q3 = ["3.9514", "3.8167", "3.6730"]
    q4 = ["3.9003", "3.7654", "3.6211"]
    print("boltzmann_q3_181mK", [mp.nstr(x, 17) for x in boltzmann(mp.mpf("0.181072"), q3)[0]])
    print("boltzmann_q4_45mK_pg", mp.nstr(boltzmann(mp.mpf("0.045"), q4)[0][0], 17))
    print("boltzmann_q3_100mK", [mp.nstr(x, 17) for x in boltzmann(mp.mpf("0.1"), q3)[0]])
    x = mp.mpf(2)
    print("qcrb_n2_x2", mp.nstr(mp.sqrt((1 + mp.e**x) ** 2 / (x**2 * mp.e**x)), 17))
    for n in (2, 3, 4):
        print(f"qcrb_q3_100mK_n{n}", mp.nstr(qcrb_var(mp.mpf("0.1"), q3, n), 17))
        print(f"qcrb_q3_181mK_n{n}", mp.nstr(qcrb_var(mp.mpf("0.181072"), q3, n), 17))
    print("bayes_6", mp.nstr(mp.ncdf(-3), 17))
    print("bayes_4", mp.nstr(mp.ncdf(-2), 17))
    print("clifford_0.995125", mp.nstr(1 - (1 - mp.mpf("0.995125")) / (2 * mp.mpf(45) / 24), 17))
    print("net_3.540mK_0.171s", mp.nstr(mp.mpf("3.540e-3") * mp.sqrt(mp.mpf("0.171")), 17))
    print("sigma_mu", mp.nstr(mp.mpf("3.540e-3") / mp.sqrt(5000), 17))
    g = [1 / mp.mpf("238.22e-9"), 1 / mp.mpf("136.80e-9"), 1 / mp.mpf("128.84e-9")]
    p = populations_h(mp.mpf("1.2e-6"), *g)
    print("pg_h_1.2us", mp.nstr(p[0], 17))
    pf = mp.expm(mp.matrix([[0, g[0], 0, 0], [0, -g[0], g[1], 0], [0, 0, -g[1], g[2]], [0, 0, 0, -g[2]]])
                 * mp.mpf("300e-9")) * mp.matrix([0, 0, 1, 0])
    print("pop_f_300ns", [mp.nstr(v, 17) for v in pf])
    floor = mp.mpf("0.985")
    pe = mp.e ** (-g[0] * mp.mpf("1.2e-6"))
    print("pg_e_1.2us_floor", mp.nstr(floor * (1 - pe), 17))
    for ls in ("0.5e-9", "1e-9", "2e-9"):
        print(f"ff_ls{ls}", mp.nstr(filter_freq(50, mp.mpf("1.17e8"), mp.mpf("6.5e-3"), mp.mpf("2e-3"), mp.mpf(ls), 0), 17))
    print("ff_ls1e-9_cg20fF", mp.nstr(filter_freq(50, mp.mpf("1.17e8"), mp.mpf("6.5e-3"), mp.mpf("2e-3"), mp.mpf("1e-9"), mp.mpf("20e-15")), 17))
    # Multinomial-theory sigma_T for N shots over the g..h manifold of a
    # six-level ladder: T * bound_4 / sqrt(N * P_4).
    t = mp.mpf("0.181072")
    fs6 = q3 + []
    step = mp.mpf(q3[1]) - mp.mpf(q3[2])
    f4 = mp.mpf(q3[2]) - step
    f5 = f4 - step
    p6, _ = boltzmann(t, [mp.mpf(q3[0]), mp.mpf(q3[1]), mp.mpf(q3[2]), f4, f5])
    p4 = sum(p6[:4])
    print("p4_mass_6level_181mK", mp.nstr(p4, 17))
    print("sigma_T_theory_N5000", mp.nstr(t * qcrb_var(t, q3, 4) / mp.sqrt(5000 * p4), 17))


if __name__ == "__main__":
    main()
