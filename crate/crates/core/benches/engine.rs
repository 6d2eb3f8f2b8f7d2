use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mars_core::cars::{build_bpr_pairs, train_cars, CarsConfig};
use mars_core::par::Exec;
use mars_core::sensor::{loss_and_grad, train_sensor, Prepared, SensorConfig, SensorModel};
use mars_core::synth::{generate, SynthConfig};

fn sensor_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("sensor_loss_and_grad");
    group.sample_size(10);
    for base_donation_rate in [0.004, 0.05] {
        let d = generate(&SynthConfig {
            base_donation_rate,
            ..Default::default()
        })
        .unwrap();
        let data = d.sensor_data();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let cfg = SensorConfig {
                alpha: 16,
                exec,
                ..Default::default()
            };
            let prep = Prepared::new(&data, &cfg).unwrap();
            let m = SensorModel::init(data.dims(), &data.graph, data.schema, &cfg).unwrap();
            let id = BenchmarkId::new(format!("{exec:?}"), format!("rate {base_donation_rate}"));
            group.bench_function(id, |b| b.iter(|| loss_and_grad(&m, &prep, &cfg).unwrap()));
        }
    }
    group.finish();
}

fn ranker_epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("cars_epoch");
    group.sample_size(10);
    let d = generate(&SynthConfig {
        base_donation_rate: 0.02,
        ..Default::default()
    })
    .unwrap();
    let (m, _) = train_sensor(
        &d.sensor_data(),
        &SensorConfig {
            alpha: 16,
            epochs: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let pairs = build_bpr_pairs(&d.donations, &d.msps).unwrap();
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = CarsConfig {
            epochs: 1,
            exec,
            ..Default::default()
        };
        group.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| train_cars(&m, &d.msps, &pairs, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sensor_gradient, ranker_epoch);
criterion_main!(benches);
