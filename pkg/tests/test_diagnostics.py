import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsnpp import mms
from nsnpp import spectral as sp
from nsnpp import diagnostics as dg
from nsnpp.model import PhysicsParams, SpeciesParams, init_state
from nsnpp.schemes import SchemeVariant


def _rest(rule):
    return init_state(np.zeros((2,) + rule.shape), np.ones((2,) + rule.shape),
                      SpeciesParams(z=(1, -1), D=(1, 1)), PhysicsParams(eps=1.0, nu=0.1), rule)


@pytest.mark.parametrize("name", ["bdf1", "bdf2-mrpc", "bdf2-rpc"])
def test_energy_at_rest(name):
    rule = sp.lgl_rule(6)
    s = _rest(rule)
    variant = SchemeVariant.from_name(name)
    assert dg.discrete_energy(s, variant, 0.3, 0.1, rule) == pytest.approx(92.0, abs=1e-12)
    # with history present the BDF2 form is used: 1/2 r^2 + 1/2 (2r - r)^2
    s.prev = {"u": s.u, "r": s.r}
    assert dg.discrete_energy(s, variant, 0.3, 0.1) == pytest.approx(92.0, abs=1e-12)


def test_l2_error():
    rule = sp.lgl_rule(5)
    f = np.random.default_rng(0).standard_normal(rule.shape)
    assert dg.l2_error(f, f, rule) == 0.0
    assert dg.l2_error(f + 1.0, f, rule) == pytest.approx(2.0, abs=1e-13)
    with pytest.raises(ValueError):
        dg.l2_error(f, f[:-1], rule)


def test_rates_on_exact_power_law():
    h = [0.1, 0.05, 0.025, 0.0125]
    err = [3.0 * x ** 2 for x in h]
    np.testing.assert_allclose(dg.convergence_rates(h, err), 2.0, atol=1e-12)
    assert dg.fitted_rate(h, err) == pytest.approx(2.0, abs=1e-12)


def test_table_roundtrip(tmp_path):
    table = dg.ConvergenceTable("dt", [0.1, 0.05, 0.025, 0.0125],
                                {"u": [1e-2, 2.5e-3, 6.25e-4, 1.5625e-4], "p": [1.0, 0.5, 0.25, 0.125]})
    path = dg.write_table(table, tmp_path / "c.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "dt,err_u,err_p,rate_u,rate_p"
    assert len(lines) == 5
    assert lines[1].endswith(",,")
    rates = [float(l.split(",")[3]) for l in lines[2:]]
    np.testing.assert_allclose(rates, 2.0, atol=1e-12)
    back = dg.read_table(path)
    assert back.values == table.values and back.errors == table.errors


def test_snapshot_of_zero_field(tmp_path):
    path = dg.write_snapshot(np.zeros((2, 2)), tmp_path / "z.txt", t=0.0, var="p")
    lines = path.read_text().splitlines()
    assert lines[:2] == ["nsnpp-field 1", "N=1 t=0.0 var=p"]
    assert len(lines) == 6 and all(float(v) == 0.0 for v in lines[2:])


@settings(max_examples=20, deadline=None)
@given(N=st.integers(1, 12), seed=st.integers(0, 10 ** 6), t=st.floats(0, 1e3))
def test_snapshot_roundtrip_bit_exact(tmp_path_factory, N, seed, t):
    f = np.random.default_rng(seed).standard_normal((N + 1, N + 1)) * 10.0 ** np.random.default_rng(seed).integers(-300, 300)
    path = dg.write_snapshot(f, tmp_path_factory.mktemp("s") / "f.txt", t=t, var="u_x")
    g, meta = dg.read_snapshot(path)
    assert np.array_equal(f, g)
    assert meta == {"N": N, "t": t, "var": "u_x"}


def test_snapshot_layout(tmp_path):
    # row-major, x fastest: the second value is f(x_1, y_0)
    f = np.arange(9.0).reshape(3, 3)
    lines = dg.write_snapshot(f, tmp_path / "f.txt", t=1.0, var="c_1").read_text().splitlines()
    assert [float(v) for v in lines[2:5]] == [0.0, 1.0, 2.0]


def test_snapshot_errors(tmp_path):
    with pytest.raises(ValueError):
        dg.write_snapshot(np.zeros((2, 3)), tmp_path / "a.txt", t=0, var="p")
    with pytest.raises(ValueError):
        dg.write_snapshot(np.zeros((2, 2)), tmp_path / "a.txt", t=0, var="bad name")
    (tmp_path / "b.txt").write_text("garbage\n")
    with pytest.raises(ValueError, match="header"):
        dg.read_snapshot(tmp_path / "b.txt")
    (tmp_path / "c.txt").write_text("nsnpp-field 1\nN=2 t=0 var=p\n1\n2\n")
    with pytest.raises(ValueError, match="expected 9"):
        dg.read_snapshot(tmp_path / "c.txt")


def _row(step, n_err=1):
    return dg.TimeSeriesRow(step=step, t=0.1 * step, E_ns=1.0, E_npp=-8.0, E_total=-7.0, scheme_energy=92.0,
                            r=9.5, xi=1.0, mass=[4.4, 4.4], min_c=[0.1, 0.1], div_norm=1e-15,
                            errors={f"e{k}": 0.5 for k in range(n_err)})


def test_timeseries_roundtrip(tmp_path):
    path = dg.write_timeseries([_row(0), _row(1), _row(2)], tmp_path / "ts.csv")
    assert path.read_text().splitlines()[0] == "# nsnpp-timeseries 1"
    data = dg.read_timeseries(path)
    np.testing.assert_array_equal(data["step"], [0, 1, 2])
    np.testing.assert_array_equal(data["mass_2"], [4.4] * 3)
    assert "err_e0" in data


def test_timeseries_rejects_column_change(tmp_path):
    with dg.TimeSeriesWriter(tmp_path / "ts.csv") as wr:
        wr.write(_row(0))
        with pytest.raises(ValueError):
            wr.write(_row(1, n_err=2))


def test_timeseries_rejects_foreign_file(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        dg.read_timeseries(tmp_path / "x.csv")


def test_bdf2_velocity_error_at_table_point():
    # Example 1, BDF2 with rotational correction, dt = 1e-2, T = 1, N = 64
    from nsnpp.schemes import Stepper

    rule = sp.lgl_rule(64)
    case = mms.get_case("example1")
    u0, c0 = mms.initial_fields(case, rule)
    s = init_state(u0, c0, case.species, case.physics, rule)
    st_ = Stepper(rule, case.species, case.physics, SchemeVariant.from_name("bdf2-rpc"), 1e-2,
                  forcing=case.forcing_at(rule))
    s = st_.run(s, 100)
    u, _, _, _ = mms.exact_fields(case, s.t, rule)
    assert dg.l2_error(s.u, u, rule) == pytest.approx(9.92445e-5, rel=0.1)
