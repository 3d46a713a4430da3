"""A reduced configuration that runs every scenario in well under a minute."""

SMALL_YAML = """\
schema_version: 1
seed: 11
scenarios: [lap, iterated, mourre, classical, microlocal, decay, spectral, wkb]
grid: {rmax: 400.0, n: 400}
sweep: {emin: 1.0e-3, emax: 1.0, points: 4, args: 2}
iterated: {rmax: 500.0, n: 500, emin: 1.0e-3, points: 4}
mourre: {rmax: 10.0, n: 60, energies: [1.0e-2, 1.0], epsilons: [1.0e-2, 1.0e-1]}
classical: {count: 4, T: 300.0}
microlocal: {n: 64, points: 2, extent: 500.0}
decay: {rmax: 300.0, n: 300, cap: 4.0, points: 5}
spectral: {rho_min: 5.0, rho_max: 40.0, rho_points: 6, count: 6, n: 300, min_crossings: 1,
           r_max: 200.0, r_points: 2001}
wkb: {x_max: 1000.0, samples: 100}
"""
