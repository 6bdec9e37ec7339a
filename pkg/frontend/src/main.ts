import { api } from './api'
import { createApp } from './app'
import './style.css'

const host = document.getElementById('app')
if (host) createApp(host, api)
