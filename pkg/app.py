import json
import logging
import os
import threading
import uuid

from flask import Flask, jsonify, request

from models.errors import ConfigError
from models.experiments import ExperimentHarness
from utils.data_manager import ExperimentConfigManager, RunManager
from utils.report_engine import ReportEngine, log_error_to_file

app = Flask(__name__)
app.config.from_object(f"config.{os.environ.get('KERNEL_LAB_APP_CONFIG', 'DevelopmentConfig')}")
logging.basicConfig(level=app.config.get('LOG_LEVEL', 'INFO'), format=app.config['LOG_FORMAT'])

# Initialize managers
config_manager = ExperimentConfigManager()
run_manager = RunManager()
report_engine = ReportEngine()
harness = ExperimentHarness()


def configure(settings):
    """Swap the configuration class, e.g. for tests"""
    global config_manager
    app.config.from_object(settings)
    config_manager = ExperimentConfigManager(settings)


@app.route('/api/experiments')
def list_experiments():
    """Built-in experiments and their default configurations"""
    try:
        experiments = config_manager.list_experiments()
        for entry in experiments:
            entry['config'] = config_manager.get_experiment_config(entry['id'])
        return jsonify(experiments)
    except Exception as e:
        app.logger.error(f"List experiments error: {str(e)}")
        return jsonify({'error': str(e)}), 500


@app.route('/api/run-experiment', methods=['POST'])
def run_experiment():
    """Validate a config and start the experiment in a background thread"""
    try:
        run_data = request.get_json(silent=True)
        if not run_data:
            return jsonify({'error': 'No experiment config provided'}), 400
        if 'experiment' not in run_data:
            return jsonify({'error': 'config invalid: experiment: missing'}), 400

        try:
            cfg = config_manager.build(data=run_data)
        except ConfigError as e:
            return jsonify({'error': str(e), 'key': e.key}), 400

        run_config_str = json.dumps(cfg.echo(), sort_keys=True)
        run_id = str(uuid.uuid5(uuid.NAMESPACE_DNS, run_config_str))

        _, created = run_manager.claim_run(run_id, cfg.echo())
        if not created:
            return jsonify({
                'status': 'success',
                'run_id': run_id,
                'message': 'Using existing run results'
            })

        analysis_thread = threading.Thread(target=run_experiment_analysis, args=(run_id, cfg))
        analysis_thread.daemon = True
        run_manager.update_status(run_id, 'running', 0, 'initialization')
        analysis_thread.start()

        return jsonify({
            'status': 'success',
            'run_id': run_id,
            'message': f"{cfg.experiment} started successfully"
        })
    except Exception as e:
        app.logger.error(f"Run experiment error: {str(e)}")
        return jsonify({'error': str(e)}), 500


def run_experiment_analysis(run_id, cfg):
    """Run one experiment in a background thread"""
    try:
        update_run_status(run_id, 'running', 10, f"Running {cfg.experiment}")
        result = harness.run(cfg)

        update_run_status(run_id, 'running', 80, 'Writing report')
        out_dir = os.path.join(cfg.output_dir, run_id)
        paths = report_engine.emit(result, out_dir)
        summary = report_engine.build_summary(result)
        summary['files'] = paths

        run_manager.store_results(run_id, summary)
        update_run_status(run_id, 'completed', 100, 'Experiment complete')
    except Exception as e:
        error_msg = f"Experiment error for {run_id}: {str(e)}"
        app.logger.error(error_msg)
        log_error_to_file(error_msg, cfg.output_dir)
        update_run_status(run_id, 'error', 0, f"Error: {str(e)}")


def update_run_status(run_id, status, progress, phase):
    """Update run status in the run manager"""
    try:
        run_manager.update_status(run_id, status, progress, phase)
    except Exception as e:
        app.logger.error(f"Status update error for {run_id}: {str(e)}")


@app.route('/api/run-status/<run_id>')
def get_run_status(run_id):
    """Get current status of a run"""
    try:
        run = run_manager.get_run(run_id)
        if not run:
            return jsonify({'error': 'Run not found'}), 404
        return jsonify({
            'run_id': run_id,
            'status': run['status'],
            'progress': run.get('progress', 0),
            'current_phase': run.get('current_phase', ''),
            'created_at': run.get('created_at')
        })
    except Exception as e:
        app.logger.error(f"Get run status error: {str(e)}")
        return jsonify({'error': str(e)}), 500


@app.route('/api/results/<run_id>')
def get_run_results(run_id):
    """JSON summary of a completed run"""
    try:
        run = run_manager.get_run(run_id)
        if not run:
            return jsonify({'error': 'Run not found'}), 404
        if run.get('status') != 'completed':
            return jsonify({'status': run.get('status'), 'message': 'Results not ready'}), 202
        return jsonify(run['results'])
    except Exception as e:
        app.logger.error(f"Get run results error: {str(e)}")
        return jsonify({'error': str(e)}), 500


@app.errorhandler(404)
def not_found(error):
    return jsonify({'error': 'Not found'}), 404


@app.errorhandler(500)
def internal_error(error):
    app.logger.error(f"Internal server error: {str(error)}")
    return jsonify({'error': 'Internal server error'}), 500


if __name__ == '__main__':
    print("🚀 Starting random kernel lab API...")
    print("📊 Experiments: http://localhost:5000/api/experiments")
    print("🔧 POST a config to: http://localhost:5000/api/run-experiment")

    app.run(debug=True, host='0.0.0.0', port=5000, threaded=True)
