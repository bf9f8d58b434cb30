"""Smoke test of the Python bindings.

Build and install first:  pip install ./crates/python   (or maturin develop)
"""

import json
import math

import mmadoa


def main():
    antenna = mmadoa.Antenna.synthetic(seed=1, num_ports=4, l_truth=4, mode="xz-cut2d")
    assert antenna.num_ports == 4 and antenna.planar
    model = antenna.fit_wm()
    print(f"fitted {model.name}: {model.num_ports} ports")

    theta = math.radians(20.0)
    gains = model.gain(theta)
    resp = model.response(theta)
    assert all(abs(abs(a) ** 2 - g) < 1e-9 for a, g in zip(resp, gains))

    noise, power, n = 1.0, 100.0, 1000
    snaps = mmadoa.Snapshots.simulate(model, theta, power, noise, n, seed=7)
    coherent = model.c_ml(snaps)
    noncoherent = model.nc_ml(snaps.rss(), n)
    reduced = model.nc_rc(snaps.rss(), noise)
    for name, est in [("c-ml", coherent), ("nc-ml", noncoherent), ("nc-rc", reduced)]:
        got = math.degrees(est["signals"][0]["theta"])
        print(f"{name}: theta {got:.3f} deg (truth 20)")
        assert abs(got - 20.0) < 1.0, name

    crb = model.crb_coherent(theta, power, noise, n)
    nc_crb = model.crb_noncoherent(theta, power, noise, n)
    print(f"root-CRB theta: coherent {math.degrees(math.sqrt(crb['theta'])):.4f} deg, "
          f"non-coherent {math.degrees(math.sqrt(nc_crb['theta'])):.4f} deg")
    assert 0 < crb["theta"] <= nc_crb["theta"]

    sphere = mmadoa.Antenna.synthetic(mode="full-sphere3d", grid_step_deg=5.0)
    pmodel = sphere.fit_wm()
    d = (math.radians(40.0), math.radians(100.0))
    pol = (math.radians(30.0), math.radians(45.0))
    snaps = mmadoa.Snapshots.simulate(pmodel, d[0], power, noise, n, seed=3, phi=d[1], polarization=pol)
    est = pmodel.p_ml(snaps, grid_step_deg=5.0)["signals"][0]
    print("p-ml: theta {:.2f} phi {:.2f} gamma {:.2f} beta {:.2f} deg".format(
        *(math.degrees(est[k]) for k in ("theta", "phi", "gamma", "beta"))))
    assert abs(est["theta"] - d[0]) < math.radians(2.0)

    records = mmadoa.run_sweep(overrides=["trials=20", "axis.stop=10"])
    for r in records:
        print(f"sweep snr {r['axis_value']:5.1f} dB: rmse {r['rmse_deg']:.4f} deg, ratio {r['ratio']:.3f}")
    assert len(records) == 3

    config = json.loads(mmadoa.default_config())
    assert config["trials"] == 1000

    try:
        mmadoa.run_sweep(overrides=["trials=0"])
    except ValueError as e:
        print(f"rejected bad config: {e}")
    else:
        raise AssertionError("trials=0 accepted")
    print("ok")


if __name__ == "__main__":
    main()
